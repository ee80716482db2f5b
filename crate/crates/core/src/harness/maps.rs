//! Maps shipped with the crate.
//!
//! `map5x5` and `map11x11` are open grids with the goal in the bottom-right
//! corner. `map17x17w` is a four-rooms layout. `map5x5w` and `map6x6w` are
//! small walled mazes whose wall placement is our own choice.

pub const BUNDLED: [(&str, &str); 5] = [
    ("map5x5", include_str!("../../../../maps/map5x5.txt")),
    ("map5x5w", include_str!("../../../../maps/map5x5w.txt")),
    ("map6x6w", include_str!("../../../../maps/map6x6w.txt")),
    ("map11x11", include_str!("../../../../maps/map11x11.txt")),
    ("map17x17w", include_str!("../../../../maps/map17x17w.txt")),
];

/// Text of a bundled map by name (`map5x5`, ...).
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}
