"""
Linear cost in the edge count
=============================

Benchmark graphs are built from fixed-size isolated communities, so
doubling the target edge count doubles the communities and nothing
else. One training epoch and one full-graph inference pass are timed
at each size and fitted against the measured edge counts.
"""

from coldgraph.evaluate import bench_config_for_edges, scaling_benchmark

sizes = (5_000, 10_000, 20_000, 40_000)

# what one of these graphs looks like
cfg = bench_config_for_edges(sizes[0], seed=0)
print(f"{sizes[0]}-edge profile: {cfg.n_communities} communities of "
      f"{cfg.n_sellers // cfg.n_communities} sellers / "
      f"{cfg.n_products // cfg.n_communities} products, no cross links")

for task in ("train_epoch", "inference"):
    result = scaling_benchmark(sizes, task, seed=0)
    print(f"\n{task}:")
    for edges, sec in zip(result.measured_edges, result.seconds):
        print(f"  {edges:6d} edges  {1000 * sec:8.2f} ms")
    print(f"  fit: {1e6 * result.slope:.3f} us/edge, "
          f"intercept {1000 * result.intercept:.2f} ms, "
          f"R^2 = {result.r_squared:.4f}")
