"""Synthetic instance generation and file ingestion.

Generators
----------
* ``gen_interior_instance`` — draws topics phi_k ~ Dir(beta 1_V) and
  theta_true ~ Dir(1_K), then sets p to the exact mixture, which makes
  theta_true the unique maximizer (gradient identically one).
* ``gen_boundary_instance`` — plants a maximizer with a prescribed number
  of zero coordinates and multipliers lambda_k ~ U(lambda_min, lambda_max):
  a target gradient b (1 on the support, 1 - lambda_k on the active set) is
  realized by solving the under-determined system [phi; s^T] w = [b; 1]
  for the minimum-norm-from-uniform w >= 0 and recovering
  p_v = s_v w_v / sum s w.  Draws are repeated until w is non-negative.
* ``gen_sparsity_controlled_phi`` — dominant-topic block construction whose
  measured sparsity equals the target exactly (all words sit at the same
  off/dominant mass ratio, so one common row normalization preserves it).

File formats (all JSON, floats at full round-trip precision)
------------------------------------------------------------
* topic matrix:   {"K": int, "V": int, "phi": [[...], ...]}
* corpus:         JSON lines, one {"counts": {"word_index": count, ...}} per document
* instance:       {"K", "V", "phi", "p", "n"?, "theta_star"?, "lambda"?,
                   "active_set"?, "manifest"?}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GenerationError, ValidationError
from .objectives import LdaInstance
from .simplex import DirichletParams, RandomStream, SimplexPoint, coords_of

GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class GeneratorConfig:
    num_topics: int
    vocab_size: int
    phi_prior: float = 0.1
    planted_zeros: int = 0
    lambda_min: float = 0.2
    lambda_max: float = 1.0
    max_retries: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.num_topics < 1:
            raise ValidationError("num_topics must be positive")
        if self.vocab_size < self.num_topics:
            raise ValidationError("vocab_size must be at least num_topics")
        if self.phi_prior <= 0:
            raise ValidationError("phi_prior must be positive")
        if not 0 <= self.planted_zeros <= self.num_topics - 1:
            raise ValidationError("planted_zeros must lie in [0, num_topics - 1]")
        if not 0 < self.lambda_min <= self.lambda_max <= 1.0:
            raise ValidationError(
                "need 0 < lambda_min <= lambda_max <= 1 (the gradient is non-negative)")
        if self.max_retries < 1:
            raise ValidationError("max_retries must be positive")


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    """An instance together with its known maximizer, when one was planted."""

    instance: LdaInstance
    theta_star: SimplexPoint | None = None
    lam: np.ndarray | None = None
    active_set: tuple[int, ...] = ()

    @property
    def num_active(self) -> int:
        return len(self.active_set)


def _draw_phi(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    from .simplex import _gamma_batch

    beta = np.full(cfg.vocab_size, cfg.phi_prior)
    return _gamma_batch(beta, rng, cfg.num_topics)


def gen_interior_instance(cfg: GeneratorConfig, stream: RandomStream) -> PlantedInstance:
    """Instance with a known interior maximizer (p is the exact mixture)."""
    if cfg.planted_zeros != 0:
        raise ValidationError("interior generation requires planted_zeros = 0")
    rng = stream.generator()
    from .simplex import _gamma_batch

    for _ in range(cfg.max_retries):
        phi = _draw_phi(cfg, rng)
        if np.linalg.matrix_rank(phi) < cfg.num_topics:
            continue
        theta_true = _gamma_batch(np.ones(cfg.num_topics), rng, 1)[0]
        p = theta_true @ phi
        inst = LdaInstance(phi=phi, p=p / p.sum())
        return PlantedInstance(instance=inst, theta_star=SimplexPoint(theta_true),
                               lam=np.zeros(0), active_set=())
    raise GenerationError(f"no full-rank topic matrix after {cfg.max_retries} attempts")


def gen_boundary_instance(cfg: GeneratorConfig, stream: RandomStream) -> PlantedInstance:
    """Instance whose maximizer has cfg.planted_zeros leading zero coordinates."""
    m = cfg.planted_zeros
    if not 1 <= m <= cfg.num_topics - 1:
        raise ValidationError("boundary generation requires 1 <= planted_zeros <= K-1")
    rng = stream.generator()
    K = cfg.num_topics
    from .simplex import _gamma_batch

    w0 = np.full(cfg.vocab_size, 1.0 / cfg.vocab_size)
    for _ in range(cfg.max_retries):
        phi = _draw_phi(cfg, rng)
        if np.linalg.matrix_rank(phi) < K:
            continue
        theta = np.zeros(K)
        theta[m:] = _gamma_batch(np.ones(K - m), rng, 1)[0]
        lam = rng.uniform(cfg.lambda_min, cfg.lambda_max, size=m)

        target = np.ones(K)
        target[:m] = 1.0 - lam
        s = theta @ phi
        # the normalization row s^T w = 1 is a linear combination of the
        # gradient rows (s = theta^T phi and theta^T target = 1), so the
        # minimum-norm correction comes from the K x K Gram of phi alone
        # and the normalization holds automatically
        gram = phi @ phi.T
        if np.linalg.cond(gram) > GRAM_COND_LIMIT:
            continue
        w = w0 + phi.T @ np.linalg.solve(gram, target - phi @ w0)
        if w.min() < 0:
            continue
        weighted = s * w
        p = weighted / weighted.sum()
        inst = LdaInstance(phi=phi, p=p)
        return PlantedInstance(instance=inst, theta_star=SimplexPoint(theta),
                               lam=lam, active_set=tuple(range(m)))
    raise GenerationError(
        f"no non-negative word weighting found after {cfg.max_retries} attempts")


def gen_sparsity_controlled_phi(num_topics: int, vocab_size: int, target_epsilon: float,
                                stream: RandomStream) -> np.ndarray:
    """Topic matrix whose measured sparsity equals target_epsilon exactly.

    Words are assigned dominant topics round-robin (every topic owns at
    least one word), per-topic mass over owned words is Dir(1), and every
    word's off-dominant mass is target_epsilon times its dominant mass,
    split evenly over the other topics.  All row sums equal 1 + epsilon, so
    a common normalization preserves the ratios.  Requires
    target_epsilon < K - 1, otherwise the dominant entry would no longer be
    the unique argmax (reported as an infeasible target).
    """
    if num_topics < 2:
        raise ValidationError("need at least two topics")
    if vocab_size < num_topics:
        raise ValidationError("vocab_size must be at least num_topics")
    if target_epsilon < 0:
        raise ValidationError("target_epsilon must be non-negative")
    if num_topics > 2 and target_epsilon >= num_topics - 1:
        raise ValidationError(
            f"target {target_epsilon} >= K-1 makes the dominant topic ambiguous")
    if num_topics == 2 and target_epsilon >= 1:
        raise ValidationError("target >= 1 makes the dominant topic ambiguous for K=2")

    rng = stream.generator()
    owner = np.arange(vocab_size) % num_topics
    phi = np.zeros((num_topics, vocab_size))
    from .simplex import _gamma_batch

    for k in range(num_topics):
        owned = np.flatnonzero(owner == k)
        mass = _gamma_batch(np.ones(owned.size), rng, 1)[0]
        phi[k, owned] = mass
    dominant = phi.max(axis=0)
    if target_epsilon > 0:
        off = target_epsilon * dominant / (num_topics - 1)
        phi = np.where(phi > 0, phi, off[None, :])
    phi /= phi.sum(axis=1)[:, None]
    return phi


@dataclass(frozen=True)
class CorpusDocument:
    """Sparse bag of words: word index -> count, with total length n."""

    term_frequencies: dict[int, int]
    n: int

    def __post_init__(self):
        if any(c < 0 for c in self.term_frequencies.values()):
            raise ValidationError("negative word count")
        total = sum(self.term_frequencies.values())
        if total <= 0:
            raise ValidationError("document must contain at least one word")
        if total != self.n:
            raise ValidationError("n must equal the sum of the counts")

    def frequency_vector(self, vocab_size: int) -> np.ndarray:
        p = np.zeros(vocab_size)
        for idx, count in self.term_frequencies.items():
            if not 0 <= idx < vocab_size:
                raise ValidationError(f"word index {idx} outside vocabulary of size {vocab_size}")
            p[idx] = count
        return p / p.sum()


def sample_document(phi: np.ndarray, theta, length: int,
                    stream: RandomStream) -> CorpusDocument:
    """Draw a document of `length` words from the mixture theta . phi."""
    if length < 1:
        raise ValidationError("document length must be positive")
    word_probs = coords_of(theta) @ phi
    word_probs = word_probs / word_probs.sum()
    counts = stream.generator().multinomial(length, word_probs)
    freq = {int(v): int(c) for v, c in enumerate(counts) if c > 0}
    return CorpusDocument(term_frequencies=freq, n=int(length))


def to_lda_instance(phi: np.ndarray, doc: CorpusDocument) -> LdaInstance:
    """Instance for one document: p from counts, n from the document length."""
    p = doc.frequency_vector(phi.shape[1])
    return LdaInstance(phi=phi, p=p, n=doc.n)


# ---------------------------------------------------------------------------
# File I/O


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def save_topic_matrix(path, phi: np.ndarray) -> None:
    phi = np.asarray(phi, dtype=float)
    _write_json(path, {"K": phi.shape[0], "V": phi.shape[1],
                       "phi": [[float(x) for x in row] for row in phi]})


def load_topic_matrix(path) -> np.ndarray:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        k, v, rows = int(data["K"]), int(data["V"]), data["phi"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"topic file missing field: {exc}") from None
    phi = np.asarray(rows, dtype=float)
    if phi.shape != (k, v):
        raise ValidationError(f"phi shape {phi.shape} does not match (K, V) = ({k}, {v})")
    from .objectives import _normalize_rows

    return _normalize_rows(phi, "topic matrix")


def load_corpus(path) -> list[CorpusDocument]:
    docs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            counts = {int(k): int(v) for k, v in record["counts"].items()}
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"corpus line {line_no}: {exc}") from None
        docs.append(CorpusDocument(term_frequencies=counts, n=sum(counts.values())))
    if not docs:
        raise ValidationError("corpus contains no documents")
    return docs


def save_corpus(path, docs: list[CorpusDocument]) -> None:
    lines = [json.dumps({"counts": {str(k): v for k, v in sorted(d.term_frequencies.items())}},
                        sort_keys=True) for d in docs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_instance(path, planted: PlantedInstance, manifest: dict | None = None) -> None:
    inst = planted.instance
    payload = {
        "K": inst.num_topics,
        "V": inst.vocab_size,
        "phi": [[float(x) for x in row] for row in inst.phi],
        "p": [float(x) for x in inst.p],
        "n": inst.n,
    }
    if planted.theta_star is not None:
        payload["theta_star"] = [float(x) for x in planted.theta_star.coords]
        payload["lambda"] = [float(x) for x in (planted.lam if planted.lam is not None else [])]
        payload["active_set"] = list(planted.active_set)
        payload["m"] = planted.num_active
    if manifest is not None:
        payload["manifest"] = manifest
    _write_json(path, payload)


def load_instance(path) -> PlantedInstance:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("K", "V", "phi", "p"):
        if key not in data:
            raise ValidationError(f"instance file missing {key!r}")
    phi = np.asarray(data["phi"], dtype=float)
    p = np.asarray(data["p"], dtype=float)
    if phi.shape != (int(data["K"]), int(data["V"])):
        raise ValidationError("phi shape does not match (K, V)")
    if p.size != phi.shape[1]:
        raise ValidationError("p length does not match V")
    inst = LdaInstance(phi=phi, p=p, n=data.get("n"))
    theta_star = None
    lam = None
    active: tuple[int, ...] = ()
    if "theta_star" in data:
        theta_star = SimplexPoint(np.asarray(data["theta_star"], dtype=float))
        lam = np.asarray(data.get("lambda", []), dtype=float)
        active = tuple(int(i) for i in data.get("active_set", []))
    return PlantedInstance(instance=inst, theta_star=theta_star, lam=lam, active_set=active)


def default_prior(alpha_value: float, num_topics: int) -> DirichletParams:
    return DirichletParams.symmetric(alpha_value, num_topics)
