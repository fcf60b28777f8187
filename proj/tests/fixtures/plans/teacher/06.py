def solution(table_data):
    wins = get_column_by_name(table_data, "Wins")
    top = max(wins)
    bottom = min(wins)
    return equal_to(top, bottom)
