import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from functools import reduce
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.dynamics.graphham import (
    Hamiltonian,
    ParseError,
    RepGraph,
    adjacency_hamiltonian,
    load_graph,
    parse_entry,
    parse_matrix,
    parse_vector,
    read_text_file,
)
from src.dynamics.hilbert import (
    Ket,
    QuantumDynamicsError,
    WeightedSpace,
    make_space,
)
from src.dynamics.kronstruct import (
    KronHamiltonian,
    build_kron_propagator,
    error_bound_kron,
    evolve_kron,
)
from src.dynamics.ladder import AnalysisBasis, LadderSet, make_ladder
from src.dynamics.observables import (
    NotProductState,
    expected_product,
    expected_trajectory,
)
from src.dynamics.propagator import (
    MAX_PADE_ORDER,
    Trajectory,
    build_propagator,
    error_bound_multi,
    error_bound_single,
    evolve,
)
from src.dynamics.verification import PropertySuite

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
FLOAT_FORMAT = '%.17g'
OUTPUT_FORMATS = ('csv', 'json')
BASIS_STATE = re.compile(r'^e(\d+)$')


class ConfigError(QuantumDynamicsError):
    """Exception raised for invalid command-line or environment configuration."""
    pass


def configure_logging() -> None:
    """Log to stderr, and to a rotating file when LOG_FILE is set."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv('LOG_FILE')
    if log_file:
        handlers.append(RotatingFileHandler(log_file, maxBytes=10240, backupCount=3))
    logging.basicConfig(
        format=LOG_FORMAT,
        level=os.getenv('LOG_LEVEL', 'WARNING').upper(),
        handlers=handlers,
    )


def _env_number(name: str, default, kind=int):
    value = os.getenv(name)
    if value is None or value == '':
        return default
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{name} must be a {kind.__name__}, got {value!r}")


@dataclass
class RunConfig:
    state: str
    graph_paths: List[str] = field(default_factory=list)
    hamiltonian_paths: List[str] = field(default_factory=list)
    metric_paths: List[str] = field(default_factory=list)
    steps: int = 10
    h_t: float = 0.1
    pade_order: int = 1
    shift: complex = 0j
    omega0: Optional[float] = None
    output_dir: str = 'output'
    output_format: str = 'csv'
    workers: Optional[int] = None

    @property
    def n_factors(self) -> int:
        return len(self.graph_paths) + len(self.hamiltonian_paths)

    @property
    def effective_shift(self) -> complex:
        return complex(self.omega0 ** 3) if self.omega0 is not None else complex(self.shift)

    def validate(self) -> None:
        if self.graph_paths and self.hamiltonian_paths:
            raise ConfigError("use either --graph or --hamiltonian, not both")
        if self.n_factors == 0:
            raise ConfigError("one of --graph or --hamiltonian is required")
        if not 0.0 < self.h_t < 1.0:
            raise ConfigError(f"step parameter must lie in (0,1), got {self.h_t}")
        if self.steps < 0:
            raise ConfigError(f"number of steps must be nonnegative, got {self.steps}")
        if not 1 <= self.pade_order <= MAX_PADE_ORDER:
            raise ConfigError(f"Pade order must lie in 1..{MAX_PADE_ORDER}, got {self.pade_order}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output format must be one of {', '.join(OUTPUT_FORMATS)}")
        if len(self.metric_paths) not in (0, 1, self.n_factors):
            raise ConfigError(
                f"give --metric once or once per factor, got {len(self.metric_paths)} for {self.n_factors} factors"
            )
        if self.omega0 is not None and self.shift != 0:
            raise ConfigError("use either --shift or --omega0, not both")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"worker count must be positive, got {self.workers}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        try:
            shift = parse_entry(args.shift)
        except QuantumDynamicsError:
            raise ConfigError(f"bad shift {args.shift!r}")
        return cls(
            state=args.state,
            graph_paths=list(args.graph or []),
            hamiltonian_paths=list(args.hamiltonian or []),
            metric_paths=list(args.metric or []),
            steps=args.steps,
            h_t=args.ht,
            pade_order=args.pade,
            shift=shift,
            omega0=args.omega0,
            output_dir=args.out,
            output_format=args.format,
            workers=args.workers,
        )


@dataclass(frozen=True, eq=False)
class Factor:
    hamiltonian: Hamiltonian
    graph: RepGraph
    basis: AnalysisBasis

    @property
    def space(self) -> WeightedSpace:
        return self.hamiltonian.space

    def ladder(self) -> Optional[LadderSet]:
        if self.space.dim < 2:
            return None
        ladder = make_ladder(self.space.dim)
        return ladder if self.space.is_euclidean else ladder.in_basis(self.basis)


def write_trajectory(traj: Trajectory, path: Path, output_format: str) -> None:
    """Per-step state vectors, 17 significant digits."""
    states = traj.as_array()
    times = [traj.time(k) for k in range(len(traj))]
    if output_format == 'json':
        payload = {
            'tau': traj.tau,
            'dim': int(states.shape[1]),
            'states': [
                {'step': k, 'time': times[k], 're': row.real.tolist(), 'im': row.imag.tolist()}
                for k, row in enumerate(states)
            ],
        }
        path.write_text(json.dumps(payload, indent=2) + '\n', encoding='utf-8')
        return
    columns = {'step': list(range(len(traj))), 'time': times}
    for i in range(states.shape[1]):
        columns[f're_{i + 1}'] = states[:, i].real
        columns[f'im_{i + 1}'] = states[:, i].imag
    frame = pd.DataFrame(columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_trajectory(path) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read a trajectory file written by write_trajectory.

    Returns:
        (times, states) with states as a complex (steps + 1) x dim array
    """
    path = Path(path)
    if path.suffix == '.json':
        payload = json.loads(path.read_text(encoding='utf-8'))
        times = np.array([entry['time'] for entry in payload['states']], dtype=float)
        states = np.array([np.array(entry['re']) + 1j * np.array(entry['im']) for entry in payload['states']])
        return times, states.reshape(len(times), payload['dim'])
    frame = pd.read_csv(path, float_precision='round_trip')
    dim = (len(frame.columns) - 2) // 2
    real = frame[[f're_{i + 1}' for i in range(dim)]].to_numpy(dtype=float)
    imag = frame[[f'im_{i + 1}' for i in range(dim)]].to_numpy(dtype=float)
    return frame['time'].to_numpy(dtype=float), real + 1j * imag


class SimulationRunner:
    """Handlers for the run, verify and bound subcommands."""

    def run(self, config: RunConfig) -> int:
        config.validate()
        factors = self._load_factors(config)
        coords = self._initial_coords(config.state, factors)
        shift = config.effective_shift

        if len(factors) == 1 and shift == 0:
            factor = factors[0]
            psi0 = self._normalized(Ket(factor.space, coords))
            prop = build_propagator(factor.hamiltonian, config.h_t, config.pade_order, zero_tau=config.h_t)
            trajectory = evolve(prop, psi0, config.steps)
        else:
            kh = KronHamiltonian(tuple(f.hamiltonian for f in factors), shift)
            psi0 = self._normalized(Ket(kh.space, coords))
            prop = build_kron_propagator(
                kh, config.h_t, config.pade_order, zero_tau=config.h_t, workers=config.workers
            )
            trajectory = evolve_kron(prop, psi0, config.steps)
        logger.info(f"Propagated {config.steps} steps with tau={prop.tau:.6g}")

        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(trajectory, out / f"trajectory.{config.output_format}", config.output_format)
        observables = self._observables(factors, trajectory)
        if observables is not None:
            observables.to_csv(out / 'observables.csv', index=False, float_format=FLOAT_FORMAT)
        certificate = prop.certificate.to_dict(config.steps)
        (out / 'certificate.json').write_text(json.dumps(certificate, indent=2) + '\n', encoding='utf-8')
        logger.info(f"Wrote results to {out}")
        return 0

    def verify(self, dims: int, trials: int, seed: int, inject_fault: bool = False,
               workers: Optional[int] = None) -> int:
        if trials < 0:
            raise ConfigError(f"trial count must be nonnegative, got {trials}")
        if dims < 2:
            raise ConfigError(f"verification dimension must be at least 2, got {dims}")
        report = PropertySuite(dims=dims, trials=trials, seed=seed,
                               inject_fault=inject_fault, workers=workers).run()
        for line in report.lines():
            print(line)
        return 0 if report.passed else 1

    def bound(self, p: int, m: int, h: float, n_factors: int) -> int:
        if not 1 <= p <= MAX_PADE_ORDER:
            raise ConfigError(f"Pade order must lie in 1..{MAX_PADE_ORDER}, got {p}")
        if not 0.0 < h < 1.0:
            raise ConfigError(f"step parameter must lie in (0,1), got {h}")
        if m < 1:
            raise ConfigError(f"number of steps must be at least 1, got {m}")
        if n_factors < 1:
            raise ConfigError(f"factor count must be at least 1, got {n_factors}")
        print(f"single_step_bound: {error_bound_single(p, h):.17g}")
        print(f"m_step_bound: {error_bound_multi(p, m, h):.17g}")
        print(f"kron_bound: {error_bound_kron(p, m, n_factors, h):.17g}")
        return 0

    def _load_factors(self, config: RunConfig) -> List[Factor]:
        metrics = [parse_matrix(read_text_file(path)) for path in config.metric_paths]
        if len(metrics) == 1:
            metrics = metrics * config.n_factors

        factors = []
        for index in range(config.n_factors):
            space = make_space(metrics[index]) if metrics else None
            if config.graph_paths:
                graph = load_graph(config.graph_paths[index])
                hamiltonian = adjacency_hamiltonian(graph, space)
            else:
                matrix = parse_matrix(read_text_file(config.hamiltonian_paths[index]))
                space = space if space is not None else WeightedSpace.identity(matrix.shape[0])
                hamiltonian = Hamiltonian(space, matrix)
                graph = RepGraph(n_vertices=matrix.shape[0])
            logger.debug(f"Factor {index + 1}: dimension {hamiltonian.dim}, norm {hamiltonian.norm:.6g}")
            factors.append(Factor(hamiltonian, graph, AnalysisBasis.from_root(hamiltonian.space)))
        return factors

    def _initial_coords(self, spec: str, factors: Sequence[Factor]) -> np.ndarray:
        """e<k> or e<i>*e<j>*... picks analysis basis vectors; anything else is a vector file."""
        parts = spec.split('*')
        matches = [BASIS_STATE.match(part.strip()) for part in parts]
        if not all(matches):
            if len(parts) > 1:
                raise ConfigError(f"bad product state {spec!r}")
            return parse_vector(read_text_file(spec))
        if len(matches) != len(factors):
            raise ConfigError(f"state {spec!r} has {len(matches)} factors, the system has {len(factors)}")
        columns = []
        for match, factor in zip(matches, factors):
            k = int(match.group(1))
            if not 1 <= k <= factor.space.dim:
                raise ConfigError(f"basis state e{k} outside 1..{factor.space.dim}")
            columns.append(factor.basis.vectors[:, k - 1])
        return reduce(np.kron, columns)

    def _normalized(self, psi: Ket) -> Ket:
        norm = psi.space.norm(psi)
        if norm == 0.0:
            raise ConfigError("initial state is zero")
        return Ket(psi.space, psi.coords / norm)

    def _observables(self, factors: Sequence[Factor], trajectory: Trajectory) -> Optional[pd.DataFrame]:
        ladders = [f.ladder() for f in factors]
        if any(ladder is None for ladder in ladders):
            logger.warning("A factor has dimension 1; no ladder operators, observables skipped")
            return None
        graphs = [f.graph for f in factors]
        if isinstance(trajectory.space, WeightedSpace):
            rows = [(e.step, e.time, (e.raw,), (e.rounded,), e.rounded)
                    for e in expected_trajectory(ladders[0], trajectory, graphs[0])]
        else:
            try:
                rows = [(e.step, e.time, e.raw, e.rounded, e.product)
                        for e in expected_product(ladders, trajectory, graphs)]
            except NotProductState as e:
                logger.warning(f"Observables skipped: {e}")
                return None

        count = len(factors)
        frame = pd.DataFrame({'step': [r[0] for r in rows], 'time': [r[1] for r in rows]})
        for alpha in range(count):
            frame[f'raw_expectation_{alpha + 1}'] = [r[2][alpha] for r in rows]
        for alpha in range(count):
            frame[f'rounded_{alpha + 1}'] = [r[3][alpha] for r in rows]
        frame['product_rounded'] = [r[4] for r in rows]
        return frame


class ArgumentParser(argparse.ArgumentParser):
    """Routes usage errors through ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='unitary_group_simulator', description=(
        'Simulate finite-dimensional Schrodinger unitary groups with certified Pade propagators.'
    ))
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='propagate a state and write trajectory, observables and certificate')
    run.add_argument('--graph', action='append', help='representative graph file (repeat per particle)')
    run.add_argument('--hamiltonian', action='append', help='Hamiltonian matrix file (repeat per particle)')
    run.add_argument('--metric', action='append', help='inner product matrix file (once, or once per factor)')
    run.add_argument('--state', required=True, help="initial state: e<k>, e<i>*e<j>*..., or a vector file")
    run.add_argument('--steps', type=int, default=_env_number('SIM_DEFAULT_STEPS', 10))
    run.add_argument('--ht', type=float, default=_env_number('SIM_DEFAULT_HT', 0.1, float))
    run.add_argument('--pade', type=int, default=_env_number('SIM_DEFAULT_PADE', 1))
    run.add_argument('--shift', default='0', help='diagonal shift c, e.g. 0.5 or 0.5+0.25i')
    run.add_argument('--omega0', type=float, help='shift given as omega0 cubed')
    run.add_argument('--out', default='output', help='output directory')
    run.add_argument('--format', default='csv', choices=OUTPUT_FORMATS)
    run.add_argument('--workers', type=int, help='threads for building factor propagators')
    run.set_defaults(handler=lambda runner, args: runner.run(RunConfig.from_args(args)))

    verify = commands.add_parser('verify', help='run the randomized property suite')
    verify.add_argument('--dims', type=int, default=6, help='largest random dimension')
    verify.add_argument('--trials', type=int, default=20)
    verify.add_argument('--seed', type=int, default=_env_number('SIM_VERIFY_SEED', 20240607))
    verify.add_argument('--workers', type=int)
    verify.add_argument('--inject-fault', action='store_true', help=argparse.SUPPRESS)
    verify.set_defaults(handler=lambda runner, args: runner.verify(
        args.dims, args.trials, args.seed, inject_fault=args.inject_fault, workers=args.workers
    ))

    bound = commands.add_parser('bound', help='print the single step, m-step and Kronecker error bounds')
    bound.add_argument('--pade', type=int, default=_env_number('SIM_DEFAULT_PADE', 1))
    bound.add_argument('--steps', type=int, default=_env_number('SIM_DEFAULT_STEPS', 10))
    bound.add_argument('--h', type=float, default=_env_number('SIM_DEFAULT_HT', 0.1, float))
    bound.add_argument('--factors', type=int, default=1)
    bound.set_defaults(handler=lambda runner, args: runner.bound(args.pade, args.steps, args.h, args.factors))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and dispatch; returns the process exit status."""
    load_dotenv()
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.handler(SimulationRunner(), args)
    except UnicodeDecodeError as e:
        error = ParseError(f"input is not UTF-8 text (byte {e.start})")
        logger.debug(f"Decode failure: {e}", exc_info=True)
        print(f"error: {error}", file=sys.stderr)
        return 1
    except QuantumDynamicsError as e:
        logger.debug(f"Command failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.debug(f"I/O failure: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2
