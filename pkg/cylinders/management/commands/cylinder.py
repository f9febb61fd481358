"""Management command running torsion solves, symmetrizations and shape optimizations."""

import logging
import time

from django.core.management.base import BaseCommand, CommandError

from cylinders.errors import CylinderError
from cylinders.reports import persist_run
from cylinders.runs import COMMANDS, INITS, MODES, SHAPES, dispatch, load_run_config


log = logging.getLogger(__name__)

_OPTION_KEYS = (
    "a",
    "widths",
    "L",
    "res",
    "mode",
    "c",
    "c_range",
    "c_values",
    "shape",
    "init",
    "k",
    "starts",
    "seed",
    "out",
    "max_iters",
    "sym_every",
    "vtk",
)


class Command(BaseCommand):
    help = (
        "Torsional energy of domains in a cylinder: "
        "solve, symmetrize, optimize, sweep, verify, enumerate"
    )

    def add_arguments(self, parser):
        parser.add_argument("--cmd", choices=COMMANDS, required=True, help="What to run")
        parser.add_argument("--config", type=str, help="JSON file with RunConfig keys")
        parser.add_argument("--a", type=float, help="Width of the interval cross-section")
        parser.add_argument(
            "--widths", type=str, help="Comma-separated box widths (overrides --a)"
        )
        parser.add_argument("--L", type=float, help="Axial half-length of the truncation")
        parser.add_argument("--res", type=float, help="Cells per unit length")
        parser.add_argument("--mode", choices=MODES, help="Full cylinder or half cylinder")
        parser.add_argument("--c", type=float, help="Target volume")
        parser.add_argument("--c-range", type=str, help="Sweep volumes as LO:HI:STEP (inclusive)")
        parser.add_argument("--c-values", type=str, help="Comma-separated sweep volumes")
        parser.add_argument("--shape", choices=SHAPES, help="Named shape for solve")
        parser.add_argument("--init", choices=INITS, help="Initial shape for optimize and sweep")
        parser.add_argument("--k", type=int, help="Cell count for enumerate")
        parser.add_argument("--starts", type=int, help="Seeded cell-swap starts for enumerate")
        parser.add_argument("--seed", type=int, help="Seed for every randomized step")
        parser.add_argument("--out", type=str, help="Output directory")
        parser.add_argument("--max-iters", type=int, help="Optimizer iteration cap")
        parser.add_argument(
            "--sym-every", type=int, help="Steiner-symmetrize every N iterations (0 disables)"
        )
        parser.add_argument("--vtk", choices=("on", "off"), help="Also write VTK files")

    def handle(self, *args, **options):
        command = options["cmd"]
        flags = {key: options.get(key) for key in _OPTION_KEYS}
        started = time.perf_counter()
        config = None
        summary: dict = {}
        exit_code = 0
        try:
            config = load_run_config(command, options.get("config"), **flags)
            self.stdout.write(f"Running {command} into {config.out}...")
            result = dispatch(config)
            summary = result.summary
        except CylinderError as e:
            exit_code = e.exit_code
            log.warning("cylinder %s failed: %s", command, e)
            raise CommandError(str(e), returncode=exit_code) from e
        except Exception:
            exit_code = 1
            raise
        finally:
            elapsed_ms = round((time.perf_counter() - started) * 1000, 1)
            persist_run(
                command,
                config.as_dict() if config else {},
                summary,
                exit_code,
                elapsed_ms,
            )

        for path in result.files:
            self.stdout.write(f"  wrote {path}")
        message = f"\n✓ {command} complete in {elapsed_ms / 1000:.1f}s"
        self.stdout.write(self.style.SUCCESS(message))
