def solution(table_data):
    price = extract_price("$1,200")
    big = greater_than(price, -5)
    return True
