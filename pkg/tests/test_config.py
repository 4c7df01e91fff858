"""
Tests for the TOML configuration layer and ConfigValidator.
"""

from pathlib import Path

import pytest

from src.models.eiv_model import Case
from src.models.elliptical import Family
from src.models.skovgaard import RhoExponent
from src.utils.config import load_sim_config, parse_model_config, parse_sim_config, read_toml
from src.utils.errors import ConfigError
from src.utils.validator import ConfigValidator

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def sim_table(**overrides):
    table = {
        'case': 'lambda_x', 'l': 1, 'p': 3, 'family': 'normal',
        'group_size': 10, 'q': 2, 'replications': 50, 'master_seed': 7,
    }
    table.update(overrides)
    return table


class TestConfigValidator:
    """Typed getters."""

    def test_positive_integer(self):
        assert ConfigValidator.get_positive_integer({'n': 3}, 'n') == 3
        with pytest.raises(ConfigError):
            ConfigValidator.get_positive_integer({'n': 0}, 'n')
        with pytest.raises(ConfigError):
            ConfigValidator.get_positive_integer({'n': True}, 'n')
        with pytest.raises(ConfigError):
            ConfigValidator.get_positive_integer({}, 'n')
        assert ConfigValidator.get_positive_integer({}, 'n', 5) == 5

    def test_integer_list(self):
        assert ConfigValidator.get_integer_list({'q': 2}, 'q') == [2]
        assert ConfigValidator.get_integer_list({'q': [2, 3]}, 'q') == [2, 3]
        with pytest.raises(ConfigError):
            ConfigValidator.get_integer_list({'q': []}, 'q')
        with pytest.raises(ConfigError):
            ConfigValidator.get_integer_list({'q': [2, -1]}, 'q')

    def test_floats(self):
        assert ConfigValidator.get_float({'a': 1}, 'a') == 1.0
        assert ConfigValidator.get_float({}, 'a', None) is None
        with pytest.raises(ConfigError):
            ConfigValidator.get_float({'a': "1"}, 'a')
        with pytest.raises(ConfigError):
            ConfigValidator.get_float({'a': float('nan')}, 'a')
        with pytest.raises(ConfigError):
            ConfigValidator.get_positive_float({'a': -0.5}, 'a')
        assert ConfigValidator.get_float_array({'a': [[1, 2], [3, 4]]}, 'a') == [[1.0, 2.0], [3.0, 4.0]]

    def test_probabilities(self):
        assert ConfigValidator.get_probabilities({'g': [0.05]}, 'g') == (0.05,)
        with pytest.raises(ConfigError):
            ConfigValidator.get_probabilities({'g': [0.05, 1.0]}, 'g')

    def test_choice(self):
        assert ConfigValidator.get_choice({'c': ' normal '}, 'c', ('normal',)) == 'normal'
        with pytest.raises(ConfigError):
            ConfigValidator.get_choice({'c': 'gamma'}, 'c', ('normal',))


class TestModelConfig:
    """Model keys."""

    def test_lambda_x(self):
        model = parse_model_config({'case': 'lambda_x', 'l': 1, 'p': 5, 'lambda_x': 3.0})
        assert model.case is Case.LAMBDA_X_KNOWN and model.family is Family.NORMAL
        spec = model.spec([10] * 5)
        assert spec.m == 5 * spec.s

    def test_student_t_needs_dof(self):
        with pytest.raises(ConfigError):
            parse_model_config({'case': 'lambda_e', 'l': 1, 'p': 2, 'lambda_e': 4.0,
                                'family': 'student_t'})

    def test_missing_constant(self):
        with pytest.raises(ConfigError):
            parse_model_config({'case': 'lambda_x', 'l': 1, 'p': 2})

    def test_unknown_case(self):
        with pytest.raises(ConfigError):
            parse_model_config({'case': 'alpha', 'l': 1, 'p': 2})

    def test_invalid_constant(self):
        model = parse_model_config({'case': 'lambda_x', 'l': 1, 'p': 2, 'lambda_x': -1.0})
        with pytest.raises(ConfigError):
            model.spec([10, 10])

    def test_read_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("case = ", encoding='utf-8')
        with pytest.raises(ConfigError):
            read_toml(path)
        with pytest.raises(IOError):
            read_toml(tmp_path / "missing.toml")


class TestSimConfig:
    """Sweep construction."""

    def test_defaults_from_truth(self):
        rows = parse_sim_config(sim_table())
        assert len(rows) == 1
        row = rows[0]
        assert row.spec.lambda_x[0] == pytest.approx(3.0)
        assert row.q == 2 and row.replications == 50 and row.master_seed == 7
        assert row.rho_exponent is RhoExponent.Q_HALF
        assert row.levels == (0.01, 0.05, 0.10)
        assert list(row.hypothesis.values) == [0.0, 0.0]

    def test_sweep_order_and_labels(self):
        rows = parse_sim_config(sim_table(q=[2, 3], group_size=[10, 20]))
        assert [(r.q, r.spec.group_sizes[0]) for r in rows] == [(2, 10), (2, 20), (3, 10), (3, 20)]
        assert rows[1].label == "q=2, n_k=20"
        assert [r.label for r in parse_sim_config(sim_table(q=[2, 3]))] == ["q=2", "q=3"]

    def test_intercept_case(self):
        rows = parse_sim_config(sim_table(case='intercept'))
        row = rows[0]
        assert list(row.hypothesis.values) == [1.0, 1.0]
        assert row.theta_true.values[row.hypothesis.indices] == pytest.approx([1.0, 1.0])

    def test_overrides(self):
        rows = parse_sim_config(sim_table(), replications=3, master_seed=11)
        assert rows[0].replications == 3 and rows[0].master_seed == 11

    def test_zero_replications(self):
        with pytest.raises(ConfigError):
            parse_sim_config(sim_table(), replications=0)

    def test_q_larger_than_p(self):
        with pytest.raises(ConfigError):
            parse_sim_config(sim_table(q=4))

    def test_unknown_truth_key(self):
        with pytest.raises(ConfigError):
            parse_sim_config(sim_table(truth={'gamma': 1.0}))

    def test_truth_violating_null(self):
        with pytest.raises(ConfigError):
            parse_sim_config(sim_table(truth={'beta': 0.7}))

    def test_shipped_configs(self):
        rows = load_sim_config(CONFIGS / "table1_normal_lambdax.toml")
        assert [r.q for r in rows] == [2, 3, 4, 5]
        assert all(r.replications == 2500 for r in rows)
        rows = load_sim_config(CONFIGS / "table2_normal_lambdax_q3.toml")
        assert [r.spec.group_sizes[0] for r in rows] == [10, 20, 30, 40]
