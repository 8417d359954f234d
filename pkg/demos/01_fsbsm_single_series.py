# %% [markdown]
# # One location, one interval: trend, seasonality and tests
#
# Simulate a monthly centre series with a smooth (integrated random walk)
# trend and a slowly evolving first harmonic, fit the frequency-specific
# basic structural model by maximum likelihood, and read off the trend
# and seasonal tests.

# %%
import numpy as np

from interval_ucm.estimation import FitOptions, fit_ml, model_template
from interval_ucm.statespace import simulate
from interval_ucm.stattests import model_trend_tests, seasonal_cvm_test
from interval_ucm.structural import (
    FsBsmParams, build_fsbsm, extract_components, state_index,
)

# %%
truth = FsBsmParams(irregular=1.0, level=0.0, slope=1e-7, seasonal_I=3e-4, seasonal_II=0.0)
a1 = np.zeros(13)
a1[0], a1[1] = 15.0, 0.0015          # level (deg C) and monthly slope
a1[state_index("gamma1")[0]] = 7.0   # annual cycle amplitude
y, states = simulate(build_fsbsm(truth).replace(a1=a1), 1092, seed=1)
print("simulated", y.values.shape[0], "months")

# %%
fit = fit_ml(model_template(), y, FitOptions(seed=0))
print("converged:", fit.converged, " loglik: %.2f" % fit.loglik)
for name, value in fit.params.to_dict().items():
    print(f"  {name:12s} {value}")

# %% [markdown]
# Smoothed components come with pointwise standard errors; the trend
# tracks the simulated level closely.

# %%
comp = extract_components(build_fsbsm(fit.params), fit.params, y)
lo, hi = comp.band("trend")
print("trend corr with truth: %.4f" % np.corrcoef(comp.trend[:, 0], states[:, 0])[0, 1])
print("end-of-sample level %.2f (95%% band %.2f..%.2f)" % (comp.trend[-1, 0], lo[-1, 0], hi[-1, 0]))
print("end-of-sample slope per century: %.2f" % (1200 * comp.slope[-1, 0]))

# %% [markdown]
# Trend tests: the RWD null (a deterministic drift) should be rejected in
# favour of a stochastic trend only when the level itself wanders; here
# the level is smooth, so the IRW null (deterministic trend) is the one
# rejected.  Seasonal tests flag which harmonics move over time.

# %%
for name, res in model_trend_tests(y, fit.params).items():
    print(f"{name:4s} stat={res.statistic:8.4f} reject5%={res.decision_at_5pct} {res.stars}")
for j in (1, 2, "II"):
    res = seasonal_cvm_test(y, j, params=fit.params)
    print(f"seasonal {j!s:3s} stat={res.statistic:7.3f} df={res.df} reject5%={res.decision_at_5pct}")
