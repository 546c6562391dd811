from reconsider.problems.cvrp import CvrpInstance, random_cvrp
from reconsider.problems.io import (
    PROBLEMS,
    from_record,
    gap_percent,
    generate_instance,
    parse_taillard,
    format_taillard,
    read_best_known,
    read_jsonl,
    read_taillard,
    to_record,
    write_jsonl,
    write_taillard,
)
from reconsider.problems.jssp import JsspInstance, random_jssp
from reconsider.problems.oracles import (
    OracleLimitError,
    count_leaves,
    exhaustive_oracle,
    held_karp,
)
from reconsider.problems.synthetic import ExplicitTree, LazyTree, full_tree, random_tree
from reconsider.problems.tsp import TspInstance, random_tsp
from reconsider.problems.validators import validate
