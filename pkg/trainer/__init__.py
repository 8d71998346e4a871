"""
Обучение LazyGNN, метрики, бенчмарки и оракулы
"""
