def solution(table_data):
    c = get_column_by_name(table_data, "x")
    n = count(c)
    if n:
        answer = n
    else:
        answer = 0
    return answer
