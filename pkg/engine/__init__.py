"""
Численные ядра: диффузия, MLP, потери, оптимизатор, хранилища истории
"""
