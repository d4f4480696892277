#!/usr/bin/env python3
"""Regenerate the high-precision reference tables for the error-function tests.

Uses mpmath at 60 significant digits; the Rust build never runs this script.
Rows are `re im value_re value_im`, one sample per line.

    python3 gen_oracle.py
"""
import mpmath as mp

mp.mp.dps = 60

POINTS = [
    (0.0, 0.0), (1e-8, 1e-8), (1e-3, 2e-3), (0.1, 0.1), (0.5, 0.0),
    (0.0, 0.5), (1.0, 1.0), (-1.0, 1.0), (1.0, -0.5), (-0.7, -0.3),
    (2.0, 0.3), (0.3, 2.0), (3.5, 0.01), (0.01, 3.5), (5.0, 5.0),
    (6.3, 4.4), (-4.0, 1e-6), (7.5, -2.0), (10.0, 0.0), (0.0, 10.0),
    (12.0, 30.0), (-20.0, 15.0), (25.0, -10.0), (35.0, 0.5), (0.5, 40.0),
    (-50.0, 50.0), (70.0, 70.0), (99.0, 0.1), (0.1, 99.0), (-60.0, 79.0),
    (80.0, -20.0), (-99.9, 1e-3), (1e-5, 1e-12), (2.5, 1.5), (-3.3, 2.2),
    (0.8, -0.8), (4.0, -3.0), (15.0, 1.0),
]


def faddeeva(z):
    return mp.exp(-z * z) * mp.erfc(-1j * z)


def fmt(x):
    return mp.nstr(x, 25, min_fixed=-1, max_fixed=-1)


def main():
    with open("faddeeva_oracle.txt", "w") as out:
        out.write("# re im w_re w_im  (w(z) = exp(-z^2) erfc(-iz), mpmath dps=60)\n")
        for re, im in POINTS:
            z = mp.mpc(re, im)
            w = faddeeva(z)
            out.write(f"{fmt(z.real)} {fmt(z.imag)} {fmt(w.real)} {fmt(w.imag)}\n")
    with open("erfc_oracle.txt", "w") as out:
        out.write("# re im erfc_re erfc_im  (mpmath dps=60; finite double-range values only)\n")
        for re, im in POINTS:
            z = mp.mpc(re, im)
            v = mp.erfc(z)
            if abs(v) > mp.mpf("1e300") or (v != 0 and abs(v) < mp.mpf("1e-300")):
                continue
            out.write(f"{fmt(z.real)} {fmt(z.imag)} {fmt(v.real)} {fmt(v.imag)}\n")


if __name__ == "__main__":
    main()
