"""
Общие модули: конфигурация, модели, граф, датасеты
"""
