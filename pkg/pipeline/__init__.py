# __init__.py