"""Distributionally robust facility siting under CVaR."""
