"""Closed vocabulary shared by the skill language and the crafting world."""

ITEMS = frozenset({
    "log", "oak_log", "birch_log", "plank", "stick", "crafting_table",
    "wooden_pickaxe", "cobblestone", "stone_pickaxe", "coal", "iron_ore",
    "iron_ingot", "furnace", "iron_pickaxe", "diamond",
})

STATIONS = frozenset({"crafting_table", "furnace"})

KINDS = ITEMS | STATIONS

# argument kinds per primitive, in call order
PRIMITIVES = {
    "gather": ("item", "int"),
    "craft": ("item", "int"),
    "smelt": ("item", "int"),
    "place": ("station",),
    "explore": ("item", "int"),
}

PARAM_KINDS = ("int", "item", "station")
