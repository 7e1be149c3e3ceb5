import asyncio
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from zoprolab.harness import load_experiment, run_experiment_async, spearman
from zoprolab.log import configure_logging

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"

# Group name -> (config file, expected sign of the iterations trend along the axis)
DESK_GROUPS: dict[str, tuple[str, int]] = {
    "g1": ("desk_g1.toml", 1),
    "g2": ("desk_g2.toml", -1),
    "g3": ("desk_g3.toml", -1),
}


@dataclass
class GroupResult:
    name: str
    axis: str
    values: list
    mean_iterations: list[float]
    trend: float
    expected_sign: int
    failed: int

    @property
    def trend_ok(self) -> bool:
        return self.trend * self.expected_sign >= 0


async def run_group(name: str, out_root: Path, workers: int) -> GroupResult:
    config, sign = DESK_GROUPS[name]
    spec = load_experiment(CONFIG_DIR / config)
    table = await run_experiment_async(spec, out_root / name, workers)
    values, iterations = table.series("zopro")
    failed = sum(not r.success for r in table.results)
    return GroupResult(name, spec.axis, values, iterations, spearman(values, iterations), sign, failed)


async def main():
    load_dotenv()
    configure_logging()

    out_root = Path(os.getenv("ZOPROLAB_OUT_DIR", "out/desk"))
    workers = int(os.getenv("ZOPROLAB_WORKERS", "2"))
    groups = os.getenv("ZOPROLAB_GROUPS", ",".join(DESK_GROUPS)).split(",")

    print("Configuration:")
    print(f"  Groups: {', '.join(groups)}")
    print(f"  Workers per group: {workers}")
    print(f"  Output: {out_root}")
    print()

    # Each group bounds its own scenario pool with ``workers``.
    tasks = [run_group(g, out_root, workers) for g in groups]
    results = await asyncio.gather(*tasks, return_exceptions=True)

    print()
    print("=" * 50)
    for name, result in zip(groups, results):
        if isinstance(result, Exception):
            print(f"  ERROR {name}: {result}")
            continue
        status = "OK" if result.trend_ok else "TREND MISMATCH"
        print(f"  {status}: {name} over {result.axis}, spearman={result.trend:+.2f}, failed runs={result.failed}")
        for v, it in zip(result.values, result.mean_iterations):
            print(f"      {result.axis}={v}: {it:.1f} iterations")
    print("=" * 50)


if __name__ == "__main__":
    asyncio.run(main())
