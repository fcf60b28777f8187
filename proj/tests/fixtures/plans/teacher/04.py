def solution(table_data):
    rev = get_column_by_name(table_data, "Revenue")
    new = get_column_cell_value(rev, 1)
    old = get_column_cell_value(rev, 0)
    change = subtract(new, old)
    rate = divide(change, old)
    percent = multiply(rate, 100)
    return percent
