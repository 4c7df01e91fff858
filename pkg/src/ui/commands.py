"""
Command handlers behind the command-line interface.

Each handler returns a process exit code:
0 success, 2 input error, 3 numerical failure, 4 internal error.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from src import __version__
from src.models.dataset import Dataset
from src.models.inference import (
    Hypothesis, default_init, fit_mle, standard_errors, test_hypothesis
)
from src.models.likelihood import LikelihoodContext, info_summary, observed_info
from src.models.montecarlo import generate_dataset, replication_rng, run_sweep
from src.models.skovgaard import RhoExponent
from src.ui.report import (
    dumps, render_fit, render_rate_table, render_test, write_json, write_text
)
from src.utils.config import load_model_config, load_sim_config
from src.utils.errors import (
    EIVError, EvaluationError, FitNotConverged, InitializationError, NotPositiveDefinite
)
from src.utils.logger import get_logger

logger = get_logger('commands')

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_INTERNAL = 4


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            sha.update(chunk)
    return sha.hexdigest()


@dataclass
class RunManifest:
    """
    Provenance block embedded in every output.

    Attributes:
        command (str): fit, test, simulate or generate
        inputs (dict): Input path -> SHA-256 digest
        seed (int or None): Seed used by the run
        version (str): Toolkit version
        started (str): UTC start time (ISO 8601)
        elapsed (float): Seconds spent
    """

    command: str
    inputs: dict = field(default_factory=dict)
    seed: int = None
    version: str = __version__
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    elapsed: float = 0.0
    _clock: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path):
        try:
            self.inputs[str(path)] = file_digest(path)
        except (IOError, OSError):
            self.inputs[str(path)] = None

    def finish(self):
        self.elapsed = time.perf_counter() - self._clock
        return self

    def to_dict(self):
        return {
            "command": self.command,
            "inputs": dict(self.inputs),
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "elapsed_seconds": self.elapsed,
        }


class CommandRunner:
    """
    Runs one command and maps failures to exit codes.
    """

    def __init__(self, echo=print):
        """
        Args:
            echo (callable): Sink for user-facing messages
        """
        self.echo = echo

    def run(self, command, **kwargs):
        """
        Dispatch a command by name.

        Args:
            command (str): fit, test, simulate or generate
            **kwargs: Arguments of the handler

        Returns:
            int: Exit code
        """
        handlers = {
            "fit": self.cmd_fit,
            "test": self.cmd_test,
            "simulate": self.cmd_simulate,
            "generate": self.cmd_generate,
        }
        if command not in handlers:
            self.echo(f"[ERROR] Unknown command '{command}'")
            return EXIT_INPUT
        try:
            return handlers[command](**kwargs)
        except (FitNotConverged, EvaluationError, NotPositiveDefinite) as e:
            logger.error(f"{command}: numerical failure: {e}")
            self.echo(f"[ERROR] Numerical failure: {e}")
            return EXIT_NUMERIC
        except (ValueError, IOError, OSError, InitializationError) as e:
            logger.error(f"{command}: input error: {e}")
            self.echo(f"[ERROR] {e}")
            return EXIT_INPUT
        except EIVError as e:
            logger.error(f"{command}: {e}")
            self.echo(f"[ERROR] {e}")
            return EXIT_NUMERIC
        except KeyboardInterrupt:
            raise
        except Exception as e:
            logger.exception(f"{command}: unexpected error")
            self.echo(f"[ERROR] Internal error: {e}")
            return EXIT_INTERNAL

    def _context(self, manifest, data_path, model_config_path):
        manifest.add_input(model_config_path)
        manifest.add_input(data_path)
        model = load_model_config(model_config_path)
        data = Dataset.from_csv(data_path, l=model.l, p=model.p)
        spec = model.spec(data.group_sizes)
        return LikelihoodContext(spec, model.generator(), data)

    def cmd_fit(self, data_path, model_config_path, out_path, seed=0):
        """
        Fit the full model and write the estimate as JSON.

        Returns:
            int: 0, or 3 when the fit did not converge (the JSON is still written)
        """
        manifest = RunManifest("fit", seed=seed)
        ctx = self._context(manifest, data_path, model_config_path)
        fit = fit_mle(ctx, default_init(ctx), seed=seed)
        se = standard_errors(ctx, fit)
        info = info_summary(observed_info(ctx, fit.theta))

        payload = {
            "manifest": manifest.finish().to_dict(),
            "fit": fit.to_dict(),
            "standard_errors": dict(zip(fit.theta.names(), se)),
            "information": info,
        }
        write_json(payload, out_path)
        self.echo(render_fit(fit, se, info))
        if fit.boundary:
            self.echo(f"[ERROR] Fit stopped with a variance at the boundary; "
                      f"result written to {out_path}")
            return EXIT_NUMERIC
        if not fit.converged:
            self.echo(f"[ERROR] Fit did not converge; result written to {out_path}")
            return EXIT_NUMERIC
        self.echo(f"[OK] Fit written to {out_path}")
        return EXIT_OK

    def cmd_test(self, data_path, model_config_path, null_spec, out_path,
                 rho_exponent="q-half", seed=0):
        """
        Test a null hypothesis given as 'name@group=value,...' and write the
        three statistics as JSON.
        """
        manifest = RunManifest("test", seed=seed)
        ctx = self._context(manifest, data_path, model_config_path)
        hypothesis = Hypothesis.from_text(ctx.spec, null_spec)
        result = test_hypothesis(ctx, hypothesis, RhoExponent(rho_exponent), seed=seed)

        payload = {
            "manifest": manifest.finish().to_dict(),
            "hypothesis": null_spec,
            "rho_exponent": rho_exponent,
            "result": result.to_dict(),
            "fit_full": result.fit_full.to_dict(),
            "fit_restricted": result.fit_restricted.to_dict(),
        }
        write_json(payload, out_path)
        self.echo(render_test(result, null_spec))
        self.echo(f"[OK] Test written to {out_path}")
        return EXIT_OK

    def cmd_simulate(self, sim_config_path, out_path, replications=None, seed=None, threads=1):
        """
        Run a rejection-rate study; write the JSON report to out_path and the
        text table next to it with a .txt suffix.
        """
        manifest = RunManifest("simulate", seed=seed)
        manifest.add_input(sim_config_path)
        rows = load_sim_config(sim_config_path, replications, seed)
        manifest.seed = rows[0].master_seed
        reports = run_sweep(rows, threads)
        manifest.finish()

        payload = {
            "manifest": manifest.to_dict(),
            "threads": threads,
            "wall_clock": [r.wall_clock for r in reports],
            "report": {"rows": [r.to_dict() for r in reports]},
        }
        write_json(payload, out_path)
        table = (render_rate_table(reports, manifest=manifest.to_dict()) + "\n"
                 + render_rate_table(reports, "Null rejection rates (%), degenerate excluded",
                                     policy="exclude"))
        table_path = os.path.splitext(out_path)[0] + ".txt"
        write_text(table, table_path)
        self.echo(table)
        self.echo(f"[OK] Report written to {out_path} and {table_path}")
        return EXIT_OK

    def cmd_generate(self, sim_config_path, out_path, seed=None, row=0):
        """
        Write one simulated dataset (CSV) for a row of a simulation config,
        with its manifest alongside as <out_path>.manifest.json.
        """
        manifest = RunManifest("generate", seed=seed)
        manifest.add_input(sim_config_path)
        rows = load_sim_config(sim_config_path, replications=1, master_seed=seed)
        if not 0 <= row < len(rows):
            raise ValueError(f"row must lie in 0..{len(rows) - 1}, got {row}")
        config = rows[row]
        manifest.seed = config.master_seed
        # stream 0 is never used by a replication
        data = generate_dataset(config.spec, config.generator, config.theta_true,
                                replication_rng(config.master_seed, 0))
        data.to_csv(out_path)
        write_json({"manifest": manifest.finish().to_dict(), "row": config.label},
                   f"{out_path}.manifest.json")
        self.echo(f"[OK] Dataset written to {out_path}")
        return EXIT_OK


def report_body(path):
    """JSON text of the 'report' member of a simulate output, for comparisons."""
    with open(path, encoding='utf-8') as f:
        return dumps(json.load(f)["report"])
