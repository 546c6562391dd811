"""Job shop scheduling as a sequence of job indices.

Each decision picks an unfinished job and schedules its next operation at the
earliest time both the job and the operation's machine are free (no gap
filling), which yields a semi-active schedule.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State


class JsspInstance(Instance):
    problem = "jssp"

    def __init__(self, proc_times, machine_order):
        proc = np.array(proc_times, dtype=np.int64)
        order = np.array(machine_order, dtype=np.int64)
        if proc.ndim != 2 or proc.shape != order.shape or proc.size == 0:
            raise ValueError("processing times and machine order must be J x M matrices")
        if (proc <= 0).any():
            raise ValueError("processing times must be positive integers")
        M = proc.shape[1]
        for row in order:
            if sorted(row.tolist()) != list(range(M)):
                raise ValueError("each machine-order row must be a permutation of 0..M-1")
        proc.setflags(write=False)
        order.setflags(write=False)
        self.proc_times = proc
        self.machine_order = order
        # suffix sums: remaining work of a job whose next operation is o
        rem = np.zeros((proc.shape[0], M + 1), dtype=np.int64)
        rem[:, :M] = np.cumsum(proc[:, ::-1], axis=1)[:, ::-1]
        rem.setflags(write=False)
        self.remaining_work = rem

    @property
    def jobs(self) -> int:
        return self.proc_times.shape[0]

    @property
    def machines(self) -> int:
        return self.proc_times.shape[1]

    @property
    def n(self) -> int:
        return self.proc_times.size

    @property
    def action_size(self) -> int:
        return self.proc_times.shape[0]

    def initial_state(self) -> "JsspState":
        J, M = self.proc_times.shape
        return JsspState(
            self,
            (),
            np.zeros(J, dtype=np.int64),
            np.zeros(J, dtype=np.int64),
            np.zeros(M, dtype=np.int64),
            0,
        )

    def schedule(self, decisions: Sequence[int]) -> np.ndarray:
        """Start times (J x M, indexed by operation) built by the environment."""
        starts = np.zeros(self.proc_times.shape, dtype=np.int64)
        state = self.initial_state()
        for a in decisions:
            a = int(a)
            op = state.next_op[a]
            state = state.step(a)
            starts[a, op] = state.job_ready[a] - self.proc_times[a, op]
        return starts

    def objective(self, decisions: Sequence[int]) -> float:
        if len(decisions) != self.n or any(not (0 <= a < self.jobs) for a in decisions):
            return NEG_INF
        if (np.bincount(decisions, minlength=self.jobs) != self.machines).any():
            return NEG_INF
        return self.state_after(decisions).objective()

    def to_payload(self) -> dict:
        return {
            "proc_times": self.proc_times.tolist(),
            "machine_order": self.machine_order.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "JsspInstance":
        return cls(payload["proc_times"], payload["machine_order"])


class JsspState(State):
    __slots__ = ("next_op", "job_ready", "machine_free", "makespan")

    def __init__(self, instance, decisions, next_op, job_ready, machine_free, makespan):
        super().__init__(instance, decisions)
        self.next_op = next_op
        self.job_ready = job_ready
        self.machine_free = machine_free
        self.makespan = makespan

    def mask(self) -> np.ndarray:
        return self.next_op < self.instance.machines

    def step(self, action: int) -> "JsspState":
        inst = self.instance
        if self.terminal or not (0 <= action < inst.jobs):
            raise ContractViolation(f"job {action} is out of range at depth {self.depth}")
        op = int(self.next_op[action])
        if op >= inst.machines:
            raise ContractViolation(f"job {action} is already finished")
        m = inst.machine_order[action, op]
        start = max(self.job_ready[action], self.machine_free[m])
        end = start + inst.proc_times[action, op]
        next_op = self.next_op.copy()
        next_op[action] += 1
        job_ready = self.job_ready.copy()
        job_ready[action] = end
        machine_free = self.machine_free.copy()
        machine_free[m] = end
        return JsspState(
            inst,
            self.decisions + (action,),
            next_op,
            job_ready,
            machine_free,
            max(self.makespan, int(end)),
        )

    def objective(self) -> float:
        if not self.terminal:
            raise ContractViolation("objective of a partial schedule")
        return -float(self.makespan)


def random_jssp(jobs: int, machines: int, rng: np.random.Generator) -> JsspInstance:
    proc = rng.integers(1, 100, size=(jobs, machines))
    order = np.array([rng.permutation(machines) for _ in range(jobs)])
    return JsspInstance(proc, order)
