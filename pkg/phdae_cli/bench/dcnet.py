from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from phdae_cli import create_logger
from phdae_cli.error import InvalidParameter
from phdae_cli.model import (PARAM_FIELDS, ParamMasks, PhDaeModel, PhDaeParams, StructuralMask, assemble,
                             output_matrix)
from phdae_cli.signals import DataSpec, Dataset, MultisineSpec, add_noise, multisine
from phdae_cli.solver import SolverConfig, consistent_initialize, simulate

console_logger = create_logger(__name__)

# state x = (I, V1, V2, I_G, I_R)
STATE_NAMES = ('I', 'V1', 'V2', 'I_G', 'I_R')
PARAMETER_NAMES = ('L', 'C1', 'C2', 'R_L', 'R_G', 'R_R')

STRUCTURE = np.array([
    [0.0, -1.0, 1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, -1.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0, -1.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
])
PORT = np.array([[0.0], [0.0], [0.0], [1.0], [0.0]])

# diagonal positions of the free factor entries
STORAGE_STATES = (0, 1, 2)
RESISTIVE_STATES = (0, 3, 4)

# measured states besides the port output I_G
RECOVERY_SELECTOR = np.array([
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
])

OUTPUT_SETS = ('port', 'recovery')
MASK_KEYWORDS = ('none', 'diagonal', 'lower', 'all')


@dataclass(frozen=True)
class DcNetParams:
    L: float = 2.0
    C1: float = 0.01
    C2: float = 0.02
    R_L: float = 1.0
    R_G: float = 6.0
    R_R: float = 3.0

    def __post_init__(self):
        bad = [name for name, value in asdict(self).items() if not value > 0]
        if bad:
            raise InvalidParameter(f"DC network components must be strictly positive: {', '.join(bad)}.")

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def free_pattern(entries, shape, name: str = 'mask') -> np.ndarray:
    """
    Free entries of a factor from a keyword (none, diagonal, lower, all) or a list of
    [row, column] pairs.
    """
    pattern = np.zeros(shape, dtype=bool)
    if isinstance(entries, str):
        if entries not in MASK_KEYWORDS:
            raise InvalidParameter(f"Unknown free entries '{entries}' for {name}, expected one of "
                                   f"{', '.join(MASK_KEYWORDS)} or a list of [row, column] pairs.")
        if entries == 'all':
            pattern[:] = True
        elif entries == 'diagonal':
            np.fill_diagonal(pattern, True)
        elif entries == 'lower':
            pattern = np.tril(np.ones(shape, dtype=bool))
        return pattern

    for pair in entries:
        if len(pair) != 2:
            raise InvalidParameter(f"Free entries of {name} must be [row, column] pairs, got {pair}.")
        row, col = (int(i) for i in pair)
        if not (0 <= row < shape[0] and 0 <= col < shape[1]):
            raise InvalidParameter(f"Free entry [{row}, {col}] lies outside the {shape[0]}x{shape[1]} {name}.")
        pattern[row, col] = True
    return pattern


def _reference_factors(p: DcNetParams, free_topology: bool, overridden=()) -> Dict[str, np.ndarray]:
    # every layout of M keeps (M - M^T)/2 = STRUCTURE
    values = nominal_factors(p)
    if free_topology and 'm_j' not in overridden:
        values['m_j'] = 2.0 * np.tril(STRUCTURE, k=-1)
    return values


def dc_masks(free_topology: bool = False, free_entries: Optional[Dict[str, object]] = None,
             p: DcNetParams = None) -> ParamMasks:
    """
    Masks of the known-topology setup: J and G frozen, only the diagonal factors of E on the
    storage states and of R on the resistive states are free.

    With ``free_topology`` the interconnection, the full factors and the input matrix are freed,
    keeping only the two algebraic rows of L_E at zero.

    ``free_entries`` replaces the pattern of the named factors (m_j, l_r, l_e, g); their
    remaining entries are frozen at the nominal network values of ``p``.
    """
    n = len(STATE_NAMES)
    if free_topology:
        lower = np.tril(np.ones((n, n), dtype=bool))
        l_e_pattern = lower.copy()
        l_e_pattern[3:, :] = False
        masks = ParamMasks(
            m_j=StructuralMask.free(np.tril(np.ones((n, n), dtype=bool), k=-1)),
            l_r=StructuralMask.free(lower),
            l_e=StructuralMask.free(l_e_pattern),
            g=StructuralMask.free(np.ones((n, 1), dtype=bool)),
        )
    else:
        l_e_pattern = np.zeros((n, n), dtype=bool)
        l_e_pattern[STORAGE_STATES, STORAGE_STATES] = True
        l_r_pattern = np.zeros((n, n), dtype=bool)
        l_r_pattern[RESISTIVE_STATES, RESISTIVE_STATES] = True
        masks = ParamMasks(
            # M = J gives (M - M^T)/2 = J for the antisymmetric J
            m_j=StructuralMask.fixed(STRUCTURE),
            l_r=StructuralMask.free(l_r_pattern),
            l_e=StructuralMask.free(l_e_pattern),
            g=StructuralMask.fixed(PORT),
        )
    if not free_entries:
        return masks

    unknown = sorted(set(free_entries) - set(PARAM_FIELDS))
    if unknown:
        raise InvalidParameter(f"Unknown factor(s) {', '.join(unknown)} in free entries, "
                               f"expected {', '.join(PARAM_FIELDS)}.")
    reference = _reference_factors(p or DcNetParams(), free_topology, free_entries)
    fields = dict(masks.items())
    for name, entries in free_entries.items():
        pattern = free_pattern(entries, fields[name].shape, name)
        fields[name] = StructuralMask(pattern, np.where(pattern, 0.0, reference[name]))
    return ParamMasks(**fields)


def nominal_factors(p: DcNetParams) -> Dict[str, np.ndarray]:
    l_e = np.diag(np.sqrt([p.L, p.C1, p.C2, 0.0, 0.0]))
    l_r = np.diag(np.sqrt([p.R_L, 0.0, 0.0, p.R_G, p.R_R]))
    return {'m_j': STRUCTURE.copy(), 'l_r': l_r, 'l_e': l_e, 'g': PORT.copy()}


def build_dc_network(p: DcNetParams, free_topology: bool = False,
                     free_entries: Optional[Dict[str, object]] = None) -> Tuple[PhDaeModel, PhDaeParams]:
    masks = dc_masks(free_topology, free_entries, p)
    params = PhDaeParams(masks=masks, **_reference_factors(p, free_topology, free_entries or ()))
    return assemble(params), params


def init_dc_params(rng: np.random.Generator, free_topology: bool = False, low: float = 0.5,
                   high: float = 1.5, free_entries: Optional[Dict[str, object]] = None,
                   p: DcNetParams = None) -> PhDaeParams:
    """
    Starting point for identification: free diagonal factor entries uniform in [low, high].

    Free off-diagonal factor entries start at zero, a free interconnection or input matrix
    starts at the known topology.
    """
    p = p or DcNetParams()
    masks = dc_masks(free_topology, free_entries, p)
    reference = _reference_factors(p, free_topology, free_entries or ())
    values = {}
    for name, mask in masks.items():
        v = reference[name]
        if name in ('l_e', 'l_r'):
            diag = np.zeros(mask.shape, dtype=bool)
            np.fill_diagonal(diag, True)
            draws = rng.uniform(low, high, size=mask.shape)
            v = np.where(mask.pattern & diag, draws, np.where(mask.pattern, 0.0, mask.frozen))
        values[name] = v
    return PhDaeParams(masks=masks, **values)


def estimated_physical_params(params: PhDaeParams) -> Dict[str, float]:
    """
    Component values read off the squared diagonal factor entries.
    """
    e_diag = np.diag(params.l_e) ** 2
    r_diag = np.diag(params.l_r) ** 2
    return {
        'L': float(e_diag[0]),
        'C1': float(e_diag[1]),
        'C2': float(e_diag[2]),
        'R_L': float(r_diag[0]),
        'R_G': float(r_diag[3]),
        'R_R': float(r_diag[4]),
    }


def deviations_pct(estimates: Dict[str, float], p: DcNetParams) -> Dict[str, float]:
    truth = p.as_dict()
    return {name: abs(estimates[name] - truth[name]) / truth[name] * 100.0 for name in PARAMETER_NAMES}


def output_selector(outputs: str) -> Optional[np.ndarray]:
    if outputs not in OUTPUT_SETS:
        raise InvalidParameter(f"Unknown output set '{outputs}', expected one of {', '.join(OUTPUT_SETS)}.")
    return RECOVERY_SELECTOR.copy() if outputs == 'recovery' else None


def generate_dataset(model: PhDaeModel, spec: DataSpec, seed: int, selector=None) -> Dataset:
    """
    One record: fresh multisine phases, a consistent random initial state, backward Euler truth
    and measurement noise at ``spec.snr_db``.
    """
    phase_rng, ic_rng, noise_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    excitation = MultisineSpec.random(phase_rng, f0=spec.f0, n_sines=spec.n_sines)

    oversample = max(int(spec.oversample), 1)
    h = spec.t_s / oversample
    fine_times = np.arange((spec.samples - 1) * oversample + 1) * h
    fine_inputs = multisine(excitation, fine_times).reshape(-1, 1)

    n_diff = model.n - model.algebraic_rows.size
    x_diff = ic_rng.uniform(-spec.ic_range, spec.ic_range, size=n_diff)
    x0 = consistent_initialize(model, x_diff, fine_inputs[0])

    trajectory = simulate(model, x0, fine_inputs, SolverConfig(h=h))
    states = trajectory.states[::oversample]
    inputs = fine_inputs[::oversample]
    clean = states @ output_matrix(model, selector).T
    noisy, noise_std = add_noise(clean, spec.snr_db, noise_rng)

    return Dataset(
        t_s=spec.t_s,
        inputs=inputs,
        outputs=noisy,
        clean_outputs=clean,
        snr_db=spec.snr_db,
        noise_std=np.atleast_1d(noise_std),
        seed=seed,
        meta={'phases': excitation.phases.tolist(), 'x0': x0.tolist()},
    )


def generate_datasets(p: DcNetParams, spec: DataSpec, outputs: str = 'port') -> Dict[str, Dataset]:
    """
    Train, validation and test records of the DC network, each with its own seed.
    """
    model, _ = build_dc_network(p)
    selector = output_selector(outputs)
    datasets = {}
    for name in ('train', 'val', 'test'):
        datasets[name] = generate_dataset(model, spec, spec.seeds[name], selector)
        console_logger.info(f'generated {name} set: {spec.samples} samples, seed {spec.seeds[name]}')
    return datasets
