from ._tfponet import (
    Dataset,
    Model,
    Solution1d,
    Solution2d,
    TfponetError,
    airy,
    bessel_i,
    generate_dataset,
    solve1d,
    solve2d,
)

__all__ = [
    "Dataset",
    "Model",
    "Solution1d",
    "Solution2d",
    "TfponetError",
    "airy",
    "bessel_i",
    "generate_dataset",
    "solve1d",
    "solve2d",
]
