"""Region-based multigrid for structured and hybrid region layouts."""
from .layout import (CoarsePoints, LayoutError, RegionDesc, RegionLayout, RegionVector,
                     build_layout, coarsen_layout, interface_scale, interface_sum,
                     make_consistent, read_layout, to_composite, to_region, write_layout)
from .sparse import (DimensionError, LuFactorization, SingularMatrixError, SparseMatrix,
                     lu_factor, lu_solve, read_matrix_market, spgemm, spmv, sptranspose,
                     triple_product, write_matrix_market)
from .disassembly import (NonConformalError, RegionMatrix, load_region_matrix,
                          region_matvec, save_region_matrix, split_matrix, to_composite_matrix)
from .transfers import (Aggregation, build_constant_interp, build_linear_interp,
                        fast_rap_2d_const, hybrid_aggregation, region_rap,
                        select_coarse_points)
from .multigrid import (CoarseningError, CycleConfig, DivergenceError, Hierarchy, cycle,
                        setup_hierarchy, solve)
from .composite import composite_reference_solve
from .problems import flag_regions, gen_poisson, gen_region_grid, region_grid_layout

__version__ = "0.1.0"
