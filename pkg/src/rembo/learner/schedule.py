from dataclasses import dataclass


@dataclass(frozen=True)
class ExplorationSchedule:
    """``eps(ep) = end + (start - end) * decay ** ep``, decayed once per episode."""

    start: float
    end: float
    decay: float = 0.999

    def __post_init__(self):
        if not 0.0 <= self.end <= self.start <= 1.0:
            raise ValueError("need 0 <= end <= start <= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    def __call__(self, episode):
        return epsilon(self, episode)


SCHEDULES = {
    "matrix": ExplorationSchedule(0.8, 0.0),
    "lane": ExplorationSchedule(0.95, 0.15),
    "congestion": ExplorationSchedule(0.8, 0.15),
}


def epsilon(schedule, episode):
    if episode < 0:
        raise ValueError("episode index must be non-negative")
    return schedule.end + (schedule.start - schedule.end) * schedule.decay**episode
