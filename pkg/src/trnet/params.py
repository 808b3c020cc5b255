"""Parameter counts and space savings of network tails (biases excluded).

An :class:`ArchSpec` describes only what sits after the convolutional
backbone: the activation tensor shape and a chain of tail layers. Counting is
integer arithmetic throughout; savings are exact fractions until rendering.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from math import prod

from trnet.layers import fc_param_count, tcl_param_count, trl_param_count

# Published VGG-19 totals, kept for reference. The in-text FC figure equals the
# first two FC layers with biases, so it is not the savings reference.
VGG19_TOTAL_PARAMS = 138_357_544
VGG19_FC_PARAMS_IN_TEXT = 119_545_856


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Flatten:
    def apply(self, shape):
        return (prod(shape),), 0


@dataclass(frozen=True)
class SpatialPool:
    """Average over every mode but the first (channels)."""

    def apply(self, shape):
        if len(shape) < 2:
            raise SpecError(f"spatial pooling needs spatial modes, got shape {shape}")
        return (shape[0],), 0


@dataclass(frozen=True)
class Fc:
    units: int

    def apply(self, shape):
        if len(shape) != 1:
            raise SpecError(f"FC layer needs a flat input, got shape {shape}")
        return (self.units,), fc_param_count(shape, self.units)


@dataclass(frozen=True)
class Tcl:
    ranks: tuple

    def apply(self, shape):
        if len(shape) != len(self.ranks):
            raise SpecError(f"TCL ranks {self.ranks} do not match input shape {shape}")
        return tuple(self.ranks), tcl_param_count(shape, self.ranks)


@dataclass(frozen=True)
class Trl:
    """``ranks`` lists one rank per input mode, then the output rank."""

    ranks: tuple
    outputs: int

    def apply(self, shape):
        if len(self.ranks) != len(shape) + 1:
            raise SpecError(f"TRL ranks {self.ranks} do not match input shape {shape}")
        return (self.outputs,), trl_param_count(shape, self.ranks, self.outputs)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    activation_shape: tuple
    layers: tuple
    output_classes: int

    def walk(self):
        """Yield ``(layer, output_shape, n_params)`` for every tail layer."""
        shape = tuple(self.activation_shape)
        for layer in self.layers:
            shape, n = layer.apply(shape)
            yield layer, shape, n
        if shape != (self.output_classes,):
            raise SpecError(f"{self.name}: tail ends in shape {shape}, expected ({self.output_classes},)")

    def validate(self):
        list(self.walk())
        return self


def count_tail_params(spec: ArchSpec) -> int:
    return sum(n for _, _, n in spec.walk())


@dataclass(frozen=True)
class SavingsRow:
    label: str
    n_model: int
    n_reference: int
    savings: Fraction

    def percent(self, decimals: int) -> Decimal:
        """Savings in percent, rounded half-up to ``decimals`` places."""
        with localcontext() as ctx:
            ctx.prec = 50
            value = Decimal(self.savings.numerator * 100) / Decimal(self.savings.denominator)
            return value.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def space_savings(model: ArchSpec, reference: ArchSpec) -> SavingsRow:
    n_m = count_tail_params(model)
    n_r = count_tail_params(reference)
    if n_r == 0:
        raise SpecError(f"reference {reference.name} has no parameters")
    return SavingsRow(model.name, n_m, n_r, 1 - Fraction(n_m, n_r))


def _vgg(name, tcl_ranks, hidden):
    layers = [] if tcl_ranks is None else [Tcl(tcl_ranks)]
    layers += [Flatten(), Fc(hidden), Fc(hidden), Fc(1000)]
    return ArchSpec(name, (512, 7, 7), tuple(layers), 1000)


def _resnet(name, tcl_ranks=None, trl_ranks=None):
    if trl_ranks is None:
        layers = (SpatialPool(), Fc(1000))
    else:
        layers = (() if tcl_ranks is None else (Tcl(tcl_ranks),)) + (Trl(trl_ranks, 1000),)
    return ArchSpec(name, (2048, 7, 7), tuple(layers), 1000)


def builtin_specs():
    specs = [
        _vgg("vgg19-baseline", None, 4096),
        _vgg("vgg19-tcl-512", (512, 7, 7), 4096),
        _vgg("vgg19-tcl-384", (384, 5, 5), 3072),
    ]
    for net in ("resnet50", "resnet101"):
        specs += [
            _resnet(f"{net}-baseline"),
            _resnet(f"{net}-trl-2048-7-7", trl_ranks=(2048, 7, 7, 1000)),
            _resnet(f"{net}-trl-1024-3-3", trl_ranks=(1024, 3, 3, 500)),
            _resnet(f"{net}-tcl-1024-3-3-trl", tcl_ranks=(1024, 3, 3), trl_ranks=(1024, 3, 3, 1000)),
        ]
    for r in (200, 150, 100, 50):
        specs.append(_resnet(f"resnet101-trl-{r}", trl_ranks=(r, 1, 1, r)))
    return [s.validate() for s in specs]


def get_spec(name: str) -> ArchSpec:
    for s in builtin_specs():
        if s.name == name:
            return s
    raise KeyError(f"unknown preset {name!r}")


@dataclass(frozen=True)
class TableRow:
    table: str
    label: str
    preset: str
    reference: str
    decimals: int
    # value as printed in the published table; None where no savings were printed
    printed: str | None = None


TABLE_ROWS = (
    TableRow("vgg19-tcl", "baseline / 4096", "vgg19-baseline", "vgg19-baseline", 2, "0"),
    TableRow("vgg19-tcl", "(512, 7, 7) / 4096", "vgg19-tcl-512", "vgg19-baseline", 2, "-0.21"),
    TableRow("vgg19-tcl", "(384, 5, 5) / 3072", "vgg19-tcl-384", "vgg19-baseline", 2, "65.87"),
    TableRow("resnet101-pooling-trl", "baseline", "resnet101-baseline", "resnet101-baseline", 1, "0"),
    TableRow("resnet101-pooling-trl", "(200, 1, 1, 200)", "resnet101-trl-200", "resnet101-baseline", 1, "68.2"),
    TableRow("resnet101-pooling-trl", "(150, 1, 1, 150)", "resnet101-trl-150", "resnet101-baseline", 1, "76.6"),
    TableRow("resnet101-pooling-trl", "(100, 1, 1, 100)", "resnet101-trl-100", "resnet101-baseline", 1, "84.6"),
    TableRow("resnet101-pooling-trl", "(50, 1, 1, 50)", "resnet101-trl-50", "resnet101-baseline", 1, "92.4"),
    TableRow("resnet-overcomplete", "Resnet-50 TRL (1000, 2048, 7, 7)", "resnet50-trl-2048-7-7", "resnet50-baseline", 1),
    TableRow("resnet-overcomplete", "Resnet-50 TRL (500, 1024, 3, 3)", "resnet50-trl-1024-3-3", "resnet50-baseline", 1),
    TableRow("resnet-overcomplete", "Resnet-50 TCL (1024, 3, 3) + TRL (1000, 1024, 3, 3)",
             "resnet50-tcl-1024-3-3-trl", "resnet50-baseline", 1),
    TableRow("resnet-overcomplete", "Resnet-101 TRL (1000, 2048, 7, 7)", "resnet101-trl-2048-7-7", "resnet101-baseline", 1),
    TableRow("resnet-overcomplete", "Resnet-101 TRL (500, 1024, 3, 3)", "resnet101-trl-1024-3-3", "resnet101-baseline", 1),
    TableRow("resnet-overcomplete", "Resnet-101 TCL (1024, 3, 3) + TRL (1000, 1024, 3, 3)",
             "resnet101-tcl-1024-3-3-trl", "resnet101-baseline", 1),
)


def regenerate_tables(rows=TABLE_ROWS):
    """One dict per table row with counts, rendered savings and the verification status."""
    specs = {s.name: s for s in builtin_specs()}
    out = []
    for row in rows:
        if row.preset not in specs or row.reference not in specs:
            raise KeyError(f"unknown preset in row {row.label!r}")
        s = space_savings(specs[row.preset], specs[row.reference])
        rendered = s.percent(row.decimals)
        match = None if row.printed is None else rendered == Decimal(row.printed).quantize(rendered)
        out.append({
            "table": row.table,
            "label": row.label,
            "preset": row.preset,
            "reference": row.reference,
            "n_model": s.n_model,
            "n_reference": s.n_reference,
            "savings_exact": f"{s.savings.numerator}/{s.savings.denominator}",
            "savings_percent": str(rendered),
            "printed": row.printed,
            "match": match,
        })
    return out
