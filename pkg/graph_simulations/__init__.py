# graph_simulations/__init__.py
