def solution(table_data):
    c = get_column_by_name(table_data, "x")
    s = sum(c)
    return s
    for x in c:
        pass
