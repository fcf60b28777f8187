def solution(table_data):
    a = add(1, 2)
    a += 1
    return a
