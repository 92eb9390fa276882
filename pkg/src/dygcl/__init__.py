"""
dygcl

Núcleo do modelo DyGCL: grafos dinâmicos, diferenciação reversa,
encoders local/global, objetivo conjunto e rotinas de treino.
"""
