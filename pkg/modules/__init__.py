"""
Modules package
Linear algebra, distribution families, estimators, tensor forms, bounds, duality and experiments
"""
