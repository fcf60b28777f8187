def solution(table_data):
    i = count(table_data)
    while i:
        i = subtract(i, 1)
    return i
