"""Print every space-savings row with its exact fraction and the printed value it is checked against."""

from trnet.params import regenerate_tables


def main():
    rows = regenerate_tables()
    width = max(len(r["label"]) for r in rows)
    for r in rows:
        status = {True: "match", False: "MISMATCH", None: ""}[r["match"]]
        print(f"{r['table']:<22} {r['label']:<{width}} {r['n_model']:>11} / {r['n_reference']:<11} "
              f"savings {r['savings_exact']:<20} -> {r['savings_percent']:>7}% "
              f"(printed {r['printed'] or '-'}) {status}")


if __name__ == "__main__":
    main()
