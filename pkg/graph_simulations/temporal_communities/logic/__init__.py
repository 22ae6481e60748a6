# graph_simulations/temporal_communities/logic/__init__.py
