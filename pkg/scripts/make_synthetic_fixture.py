"""Regenerate ``src/robustfit/data/synthetic_regions.csv``.

Two regional-layout series of cumulative deaths drawn from log-logistic-4
curves plus N(0, (0.005 d)^2) errors, rounded to counts; a running maximum
removes the few downward steps the noise creates early on.
"""
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from robustfit.models import get_family

REGIONS = {
    # name: (b, c, d, e)
    "Italy-style": (-5.0, 0.0, 29392.0, 39.9),
    "Lombardia-style": (-5.5, 0.0, 15157.0, 38.0),
}
N_DAYS = 41
START = date(2020, 2, 24)
SEED = 20200404


def main(out=None):
    out = Path(out or Path(__file__).resolve().parents[1] / "src/robustfit/data/synthetic_regions.csv")
    rng = np.random.default_rng(SEED)
    fam = get_family("log-logistic-4")
    days = np.arange(1, N_DAYS + 1, dtype=float)
    lines = ["data,stato,denominazione_regione,deceduti,terapia_intensiva"]
    for name, beta in REGIONS.items():
        beta = np.array(beta)
        cum = fam.eval(days, beta)
        noisy = cum + rng.normal(0.0, 0.005 * beta[2], N_DAYS)
        deaths = np.maximum.accumulate(np.maximum(np.round(noisy), 0)).astype(int)
        # ICU occupancy: a smooth hump that lags the deaths curve
        icu = np.round(0.14 * beta[2] * np.exp(-0.5 * ((days - beta[3] + 4) / 11.0) ** 2)).astype(int)
        for k in range(N_DAYS):
            d = (START + timedelta(days=k)).isoformat()
            lines.append(f"{d}T18:00:00,ITA,{name},{deaths[k]},{icu[k]}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


if __name__ == "__main__":
    print(main())
