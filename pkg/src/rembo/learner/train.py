"""Training loop with periodic evaluation, checkpoints and resume."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..envs import make_env
from ..eval.estimate import estimate_incentives
from ..eval.oracle import exact_ic_matrix, exact_ir_matrix
from ..eval.welfare import welfare_eval
from ..game import sample_types
from ..nn import TrainingDiverged, has_checkpoint, load_arrays, save_arrays
from ..replay import EvalPolicyBuffer, ReplayBuffer
from .agent import Learner
from .schedule import epsilon

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "seed", "reward", "ic_loss", "ir_loss", "epsilon")
FINAL_COLUMNS = ("step", "seed", "ic", "ir")
EXACT_COLUMNS = ("step", "seed", "exact_ic", "exact_ir")


@dataclass
class RunResult:
    run_dir: Path
    steps: int
    episodes: int
    learner: Learner
    buffer: ReplayBuffer
    eval_buffer: EvalPolicyBuffer


def run_dir_for(cfg, seed):
    return Path(cfg.output_dir) / cfg.label / f"seed_{seed}"


def build_env(cfg):
    return make_env(cfg.env, horizon=cfg.horizon, discount=cfg.gamma)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class MetricsWriter:
    """Append-only CSV; on resume rows past the checkpoint are discarded."""

    def __init__(self, path, columns, keep_until=None):
        self.path = Path(path)
        self.columns = columns
        header = ",".join(columns)
        if keep_until is None or not self.path.exists():
            self.path.write_text(header + "\n")
            return
        kept = [header]
        for line in self.path.read_text().splitlines()[1:]:
            if line and int(line.split(",", 1)[0]) <= keep_until:
                kept.append(line)
        self.path.write_text("\n".join(kept) + "\n")

    def write(self, row):
        with self.path.open("a") as fh:
            fh.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")


def eval_states(buffer, k, rng):
    """Up to ``k`` distinct stored (state, types) pairs."""
    k = min(k, len(buffer))
    idx = np.sort(rng.choice(len(buffer), size=k, replace=False))
    b = buffer.ordered()
    return b.states[idx], b.types[idx]


def evaluate(learner, buffer, cfg, seed, step, env):
    """Welfare of the greedy mechanism plus critic-estimated incentive gaps."""
    mech = learner.mechanism()
    rep = welfare_eval(env, mech, cfg.eval_episodes, np.random.default_rng([seed, step, 1]))
    reward = rep.per_step if env.is_matrix else rep.welfare
    states, types = eval_states(buffer, cfg.eval_states, np.random.default_rng([seed, step, 2]))
    inc = estimate_incentives(learner, states, types)
    return reward, inc.ic_max, inc.ir_max


def _save_checkpoint(ckpt, learner, buffer, eval_buffer, step, episode, complete):
    ckpt.mkdir(parents=True, exist_ok=True)
    meta = learner.state_meta()
    meta.update(step=step, episode=episode, complete=complete)
    save_arrays(ckpt / "learner", learner.state_arrays(), meta)
    buffer.save(ckpt / "replay")
    eval_buffer.save(ckpt / "eval_buffer")


def _load_checkpoint(ckpt, learner):
    arrays, meta = load_arrays(ckpt / "learner")
    learner.load_state(arrays, meta)
    return ReplayBuffer.load(ckpt / "replay"), EvalPolicyBuffer.load(ckpt / "eval_buffer"), meta


def train_run(cfg, seed, resume=True, env=None):
    """Train one seed; artifacts go to ``<output_dir>/<label>/seed_<seed>``."""
    env = env or build_env(cfg)
    out = run_dir_for(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint"
    run_cfg = cfg.replace(seeds=(seed,), jobs=1)
    if resume and has_checkpoint(ckpt / "learner") and (out / "config.cfg").exists():
        if (out / "config.cfg").read_text() != run_cfg.to_text():
            raise ConfigError(f"{out} holds a run with a different configuration; train with resume off or pick another output dir")
    run_cfg.write(out / "config.cfg")

    learner = Learner(env, cfg, seed)
    spec = env.spec
    step, episode = 0, 0
    if resume and has_checkpoint(ckpt / "learner"):
        buffer, eval_buffer, meta = _load_checkpoint(ckpt, learner)
        step, episode = meta["step"], meta["episode"]
        metrics = MetricsWriter(out / "metrics.csv", METRIC_COLUMNS, keep_until=step)
        if meta["complete"]:
            return RunResult(out, step, episode, learner, buffer, eval_buffer)
        log.info("resuming %s seed %d at step %d", cfg.label, seed, step)
    else:
        buffer = ReplayBuffer(cfg.buffer_size, spec.state_dim, spec.n_agents)
        eval_buffer = EvalPolicyBuffer()
        metrics = MetricsWriter(out / "metrics.csv", METRIC_COLUMNS)

    schedule = cfg.exploration()
    env_rng, replay_rng = learner.rngs["env"], learner.rngs["replay"]
    last_ckpt = step
    eps = epsilon(schedule, episode)
    while step < cfg.total_steps:
        types = sample_types(spec, env_rng)
        state = env.reset(types, env_rng)
        eps = epsilon(schedule, episode)
        for t in range(spec.horizon + 1):
            actions = learner.act(state, types, eps)
            next_state, rewards = env.step(state, actions, types, env_rng)
            buffer.push(state, actions, rewards, next_state, types, t == spec.horizon)
            batch = buffer.take(buffer.indices(cfg.batch_size, replay_rng))
            try:
                learner.update(batch)
            except TrainingDiverged as exc:
                raise TrainingDiverged(str(exc), step=step + 1) from exc
            step += 1
            state = next_state
            if step % cfg.eval_interval == 0:
                reward, ic, ir = evaluate(learner, buffer, cfg, seed, step, env)
                metrics.write(dict(step=step, seed=seed, reward=reward, ic_loss=ic, ir_loss=ir, epsilon=eps))
                eval_buffer.append(step, learner.nets["mech"].params, learner.nets["opt"].params, types)
            if step >= cfg.total_steps:
                break
        episode += 1
        if step - last_ckpt >= cfg.checkpoint_interval and step < cfg.total_steps:
            _save_checkpoint(ckpt, learner, buffer, eval_buffer, step, episode, False)
            last_ckpt = step

    write_final_estimates(learner, buffer, eval_buffer, cfg, seed, out, env)
    _save_checkpoint(ckpt, learner, buffer, eval_buffer, step, episode, True)
    return RunResult(out, step, episode, learner, buffer, eval_buffer)


def write_final_estimates(learner, buffer, eval_buffer, cfg, seed, out, env):
    """Re-estimate every snapshot with the converged critics; exact oracles for matrix games."""
    writer = MetricsWriter(out / "final_estimates.csv", FINAL_COLUMNS)
    if len(buffer) == 0 or not eval_buffer.entries:
        return
    states, types = eval_states(buffer, cfg.eval_states, np.random.default_rng([seed, 0, 3]))
    for e in eval_buffer.entries:
        mech = learner.nets["mech"].clone()
        opt = learner.nets["opt"].clone()
        mech.load_flat(e.on_path)
        opt.load_flat(e.opt_out)
        inc = estimate_incentives(learner, states, types, mech, opt)
        writer.write(dict(step=e.step, seed=seed, ic=inc.ic_max, ir=inc.ir_max))
    if env.is_matrix:
        exact = MetricsWriter(out / "exact.csv", EXACT_COLUMNS)
        for row in exact_rows(learner, eval_buffer, env, seed):
            exact.write(row)


def exact_rows(learner, eval_buffer, env, seed):
    rows = []
    for e in eval_buffer.entries:
        table = learner.mechanism(e.on_path, e.opt_out).table()
        rows.append(
            dict(step=e.step, seed=seed, exact_ic=exact_ic_matrix(env, table).max(), exact_ir=exact_ir_matrix(env, table).max())
        )
    return rows


def read_run_meta(run_dir):
    path = Path(run_dir) / "checkpoint" / "learner" / "manifest.json"
    return json.loads(path.read_text())["meta"]
