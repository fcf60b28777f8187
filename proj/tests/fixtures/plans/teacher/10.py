def solution(table_data): return count(table_data)
