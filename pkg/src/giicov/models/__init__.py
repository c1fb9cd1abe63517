"""Model zoo and lookup by name."""

from .base import Anchor, Model, PanelData, SimPath, Smoother
from .probit import DynamicProbit, OrderedProbit
from .series import ExpAR, Queue
from .toys import LinearGaussian, ThresholdToy

__all__ = ["Anchor", "Model", "PanelData", "SimPath", "Smoother", "DynamicProbit",
           "OrderedProbit", "ExpAR", "Queue", "LinearGaussian", "ThresholdToy",
           "get_model", "MODEL_NAMES"]


def _model3(**kw):
    return DynamicProbit(lagged=True, window=(3, 4, 5), T=5, **kw)


_FACTORIES = {
    "model1": lambda **kw: DynamicProbit(lagged=False, **kw),
    "model2": lambda **kw: DynamicProbit(lagged=True, **kw),
    "model3": _model3,
    "ordered": lambda **kw: OrderedProbit(**kw),
    "exp_ar": lambda **kw: ExpAR(**kw),
    "queue": lambda **kw: Queue(**kw),
    "linear_gaussian": lambda **kw: LinearGaussian(**kw),
}

MODEL_NAMES = tuple(_FACTORIES)


def get_model(name, **options):
    """Construct a model by its registry name."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}") from None
    return factory(**options)
