"""
Unitary Group Simulator - Dynamics Modules
"""
