from io import StringIO

import pandas as pd


def read_commented_csv(path):
    """Split an exported CSV into (header, table, footer); header and footer values stay strings."""
    header, footer, table = {}, {}, []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                (footer if table else header)[key.strip()] = value.strip()
            else:
                table.append(line)
    if not table:
        return header, pd.DataFrame(), footer
    return header, pd.read_csv(StringIO("".join(table))), footer
