"""
Командная строка lazygnn
"""
