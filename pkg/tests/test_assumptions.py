import numpy as np

from fluxldp import Kinetics, Reaction, ReactionNetwork, parse_network, validate_assumptions


def test_birth_death_all_checks_pass():
    net = parse_network("0 -> A @ const(1.0); A -> 0 @ ma(2.0)")
    report = validate_assumptions(net, np.array([1.0]), eps=0.25, grid=48)
    assert report.all_passed
    assert report.psi_exponent == 1
    assert set(report.items) == {"i", "ii", "iii_iv", "v", "vi"}


def test_constant_only_network_trivial_monotone():
    net = parse_network("0 -> A @ const(0.7)")
    report = validate_assumptions(net, np.array([0.5]), grid=32)
    assert report.items["v"].passed
    assert report.items["vi"].passed
    assert report.psi_exponent == 0


def test_psi_exponent_is_max_total_order():
    net = parse_network("2 H2 + O2 -> 2 H2O @ ma(0.3); H2O -> H2O @ ma(1.0)")
    report = validate_assumptions(net, np.array([1.0, 1.0, 1.0]), grid=24)
    assert report.psi_exponent == 3
    assert report.items["vi"].passed


class DecreasingKinetics(Kinetics):
    """Planted violation: rate max(0, 1 - c_0) decreases in the concentration."""

    kind = "decreasing"

    def macro(self, alpha, c):
        return max(0.0, 1.0 - c[0])


def test_planted_decreasing_kinetics_fails_monotonicity_with_witness():
    net = ReactionNetwork(
        ["A"], [Reaction(np.array([1]), np.array([0]), DecreasingKinetics())]
    )
    report = validate_assumptions(net, np.array([0.4]), eps=0.3, grid=48)
    item = report.items["v"]
    assert not item.passed
    assert item.witness is not None
    assert {"c", "r", "delta"} <= set(item.witness)
    # the witness really violates the inequality
    c = np.array(item.witness["c"])
    bump = np.array(item.witness["delta"])
    r = item.witness["r"]
    assert net.macro_rates(c + bump)[r] < net.macro_rates(c)[r]


class MismatchedMicro(Kinetics):
    """Planted violation: rescaled propensity does not converge to the macro rate."""

    kind = "mismatched"

    def macro(self, alpha, c):
        return 1.0 + c[0]

    def micro(self, alpha, volume, n):
        return 0.5 * volume  # wrong limit on purpose


def test_planted_micro_mismatch_fails_convergence():
    net = ReactionNetwork(
        ["A"], [Reaction(np.array([0]), np.array([1]), MismatchedMicro())]
    )
    report = validate_assumptions(net, np.array([1.0]), grid=24)
    assert not report.items["ii"].passed
    assert report.items["ii"].witness is not None


def test_window_extent_recorded():
    net = parse_network("0 -> A @ const(1.0); A -> 0 @ ma(2.0)")
    report = validate_assumptions(net, np.array([1.0]), eps=0.5, grid=16, w_max=2.0)
    assert report.window["eps"] == 0.5
    assert report.window["w_max"] == 2.0
    assert report.window["samples"] == 16
