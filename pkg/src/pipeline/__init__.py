"""Camada de dados: corpus → grafos, dados sintéticos e leitura/escrita de arquivos."""
