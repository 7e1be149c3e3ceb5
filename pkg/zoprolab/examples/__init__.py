from zoprolab.examples.run_desk_groups import DESK_GROUPS, GroupResult

__all__ = ["DESK_GROUPS", "GroupResult"]
