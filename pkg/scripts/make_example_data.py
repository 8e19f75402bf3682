"""Regenerate the bundled 30-row example dataset (``pmwls/data/example30.csv``).

Logistic mean with five covariates, coefficients (1, 1.2, 0.6, 0, 0) and a
stationary AR(1) error (rho 0.5, mean 0.1, sd 0.2), seed 2024.
"""
from pathlib import Path

from pmwls.model import Dataset, logistic_model, write_dataset_csv
from pmwls.simulate import (ErrorProcessSpec, STREAM_COVARIATES,
                            STREAM_ERRORS, gen_covariates, gen_errors,
                            seeded_rng, true_theta)

SEED, N, D = 2024, 30, 5


def main():
    x = gen_covariates(N, D, seeded_rng(SEED, 0, STREAM_COVARIATES))
    eps = gen_errors(ErrorProcessSpec("ar1", 0.5, 0.0, 0.1, 0.2), N,
                     seeded_rng(SEED, 0, STREAM_ERRORS))
    y = logistic_model(D).value(x, true_theta(D)) + eps
    out = Path(__file__).resolve().parents[1] / "src/pmwls/data/example30.csv"
    write_dataset_csv(out, Dataset(y, x))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
