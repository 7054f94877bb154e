"""Recompute d' from published hit and false-alarm rates and compare."""
from normverify.sdt import dprime

ROWS = [
    ("whole", None, 2.11, 0.76, 0.10),
    ("animals", None, 1.48, 0.70, 0.19),
    ("artifacts", None, 2.10, 0.77, 0.11),
    ("animals", 0.25, 1.11, 0.48, 0.13),
    ("animals", 0.50, 1.28, 0.58, 0.15),
    ("animals", 0.75, 1.43, 0.67, 0.17),
    ("animals", 1.00, 1.48, 0.70, 0.19),
    ("artifacts", 0.25, 1.66, 0.51, 0.05),
    ("artifacts", 0.50, 1.85, 0.64, 0.07),
    ("artifacts", 0.75, 2.06, 0.75, 0.09),
    ("artifacts", 1.00, 2.20, 0.81, 0.11),
]

if __name__ == "__main__":
    print("| scope | tau | hr | far | reported d' | z(hr)-z(far) | gap |")
    print("|---|---|---|---|---|---|---|")
    for scope, tau, d, hr, far in ROWS:
        got = dprime(hr, far)
        print(f"| {scope} | {'-' if tau is None else f'{tau:.2f}'} | {hr:.2f} | {far:.2f} | {d:.2f} "
              f"| {got:.3f} | {got - d:+.3f} |")
