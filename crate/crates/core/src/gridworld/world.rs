use crate::error::{invalid, Error, Result};
use alloc::{collections::VecDeque, format, string::String, vec, vec::Vec};

/// `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| invalid(format!("action index {i} out of range")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: Cell,
    pub reward: f64,
    pub done: bool,
}

/// Grid with walls, a start and a goal. Moves into walls or off the grid
/// leave the agent in place; reaching the goal pays `+1` and ends the
/// episode, which is otherwise truncated after `step_limit` moves.
#[derive(Clone, Debug, PartialEq)]
pub struct Gridworld {
    pub name: String,
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
    pub step_limit: usize,
    /// Cells of interest for analysis, e.g. the openings of a slit wall.
    pub landmarks: Vec<Cell>,
    state_index: Vec<Option<usize>>,
    cells: Vec<Cell>,
}

pub const WORLD_NAMES: [&str; 8] = [
    "empty",
    "double_slit",
    "four_rooms",
    "pachinko",
    "complex_pachinko",
    "double_double_slits",
    "many_slits",
    "even_more_slits",
];

const EMPTY: &str = "\
.......G
........
........
........
........
........
........
S.......";

const DOUBLE_SLIT: &str = "\
....#....
....#....
.........
....#....
S...#...G
....#....
.........
....#....
....#....";

const FOUR_ROOMS: &str = "\
.....#....G
.....#.....
...........
.....#.....
.....#.....
#.####.....
.....###.##
.....#.....
.....#.....
...........
S....#.....";

const PACHINKO: &str = "\
.....S.....
...........
..#.#.#.#..
...........
.#.#.#.#.#.
...........
..#.#.#.#..
...........
.#.#.#.#.#.
...........
.....G.....";

const COMPLEX_PACHINKO: &str = "\
.....S.....
...........
.##.#.#.##.
...........
#.#.###.#.#
...........
.##.#.#.##.
...........
#.#.###.#.#
...........
.....G.....";

const DOUBLE_DOUBLE_SLITS: &str = "\
...#...#...
...#...#...
.......#...
...#...#...
...#.......
S..#...#..G
...#.......
...#...#...
.......#...
...#...#...
...#...#...";

const MANY_SLITS: &str = "\
.....#.....
...........
.....#.....
...........
.....#.....
S....#....G
.....#.....
...........
.....#.....
...........
.....#.....";

const EVEN_MORE_SLITS: &str = "\
...#...#...
.......#...
...#.......
.......#...
...#.......
S..#...#..G
...#.......
.......#...
...#.......
.......#...
...#...#...";

impl Gridworld {
    pub fn new(name: impl Into<String>, width: usize, height: usize, walls: &[Cell], start: Cell, goal: Cell) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("grid must be non-empty"));
        }
        let mut wall_mask = vec![false; width * height];
        for &(r, c) in walls {
            if r >= height || c >= width {
                return Err(invalid(format!("wall ({r}, {c}) out of bounds")));
            }
            wall_mask[r * width + c] = true;
        }
        for (what, (r, c)) in [("start", start), ("goal", goal)] {
            if r >= height || c >= width {
                return Err(invalid(format!("{what} ({r}, {c}) out of bounds")));
            }
            if wall_mask[r * width + c] {
                return Err(invalid(format!("{what} ({r}, {c}) is a wall")));
            }
        }
        if start == goal {
            return Err(invalid("start and goal must differ"));
        }
        let mut state_index = vec![None; width * height];
        let mut cells = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if !wall_mask[r * width + c] {
                    state_index[r * width + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        Ok(Gridworld {
            name: name.into(),
            width,
            height,
            walls: wall_mask,
            start,
            goal,
            step_limit: 4 * (width + height),
            landmarks: Vec::new(),
            state_index,
            cells,
        })
    }

    /// Parses `#` wall, `S` start, `G` goal, `.` free; one line per row.
    pub fn from_ascii(name: impl Into<String>, map: &str) -> Result<Self> {
        let rows: Vec<&str> = map.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let (mut walls, mut start, mut goal) = (Vec::new(), None, None);
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(invalid(format!("row {r} has {} cells, expected {width}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls.push((r, c)),
                    'S' => start = Some((r, c)),
                    'G' => goal = Some((r, c)),
                    '.' => {}
                    other => return Err(invalid(format!("unexpected map character `{other}` at ({r}, {c})"))),
                }
            }
        }
        let start = start.ok_or_else(|| invalid("map has no start `S`"))?;
        let goal = goal.ok_or_else(|| invalid("map has no goal `G`"))?;
        Self::new(name, width, height, &walls, start, goal)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(if (r, c) == self.start {
                    'S'
                } else if (r, c) == self.goal {
                    'G'
                } else if self.is_wall((r, c)) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn in_bounds(&self, (r, c): Cell) -> bool {
        r < self.height && c < self.width
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.walls[cell.0 * self.width + cell.1]
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn state_index(&self, cell: Cell) -> Option<usize> {
        if self.in_bounds(cell) {
            self.state_index[cell.0 * self.width + cell.1]
        } else {
            None
        }
    }

    /// One-hot encoding over non-wall cells.
    pub fn one_hot(&self, cell: Cell) -> Result<Vec<f64>> {
        let i = self.state_index(cell).ok_or_else(|| invalid(format!("{cell:?} is not a free cell")))?;
        let mut v = vec![0.0; self.num_states()];
        v[i] = 1.0;
        Ok(v)
    }

    fn moved(&self, (r, c): Cell, action: Action) -> Cell {
        let target = match action {
            Action::Up if r > 0 => (r - 1, c),
            Action::Down if r + 1 < self.height => (r + 1, c),
            Action::Left if c > 0 => (r, c - 1),
            Action::Right if c + 1 < self.width => (r, c + 1),
            _ => return (r, c),
        };
        if self.is_wall(target) {
            (r, c)
        } else {
            target
        }
    }

    /// Applies `action` in `state` after `elapsed` earlier moves.
    pub fn step(&self, state: Cell, action: Action, elapsed: usize) -> Result<Transition> {
        if self.state_index(state).is_none() {
            return Err(invalid(format!("{state:?} is not a valid state of `{}`", self.name)));
        }
        if state == self.goal {
            return Err(invalid("episode already ended at the goal"));
        }
        let next = self.moved(state, action);
        let at_goal = next == self.goal;
        Ok(Transition {
            next,
            reward: if at_goal { 1.0 } else { 0.0 },
            done: at_goal || elapsed + 1 >= self.step_limit,
        })
    }

    /// BFS distance between free cells, treating `blocked` as extra walls.
    pub fn distance(&self, from: Cell, to: Cell, blocked: &[Cell]) -> Option<usize> {
        let free = |c: Cell| self.state_index(c).is_some() && !blocked.contains(&c);
        if !free(from) || !free(to) {
            return None;
        }
        let mut dist = vec![usize::MAX; self.width * self.height];
        let mut queue = VecDeque::from([from]);
        dist[from.0 * self.width + from.1] = 0;
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.0 * self.width + cell.1];
            if cell == to {
                return Some(d);
            }
            for a in Action::ALL {
                let n = self.moved(cell, a);
                if free(n) && dist[n.0 * self.width + n.1] == usize::MAX {
                    dist[n.0 * self.width + n.1] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

/// Openings (free cells) of the interior wall in column `col`.
fn column_openings(world: &Gridworld, col: usize) -> Vec<Cell> {
    (0..world.height).filter(|&r| !world.is_wall((r, col))).map(|r| (r, col)).collect()
}

/// Builds one of the named layouts in [`WORLD_NAMES`].
pub fn make_world(name: &str) -> Result<Gridworld> {
    let map = match name {
        "empty" => EMPTY,
        "double_slit" => DOUBLE_SLIT,
        "four_rooms" => FOUR_ROOMS,
        "pachinko" => PACHINKO,
        "complex_pachinko" => COMPLEX_PACHINKO,
        "double_double_slits" => DOUBLE_DOUBLE_SLITS,
        "many_slits" => MANY_SLITS,
        "even_more_slits" => EVEN_MORE_SLITS,
        _ => {
            return Err(Error::Unknown { kind: "world", name: name.into(), valid: WORLD_NAMES.join(", ") });
        }
    };
    let mut world = Gridworld::from_ascii(name, map)?;
    match name {
        "double_slit" => world.landmarks = column_openings(&world, 4),
        "many_slits" => world.landmarks = column_openings(&world, 5),
        "double_double_slits" | "even_more_slits" => world.landmarks = column_openings(&world, 3),
        _ => {}
    }
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_world_corners() {
        let w = make_world("empty").unwrap();
        assert_eq!((w.width, w.height), (8, 8));
        assert_eq!(w.start, (7, 0));
        assert_eq!(w.goal, (0, 7));
        assert_eq!(w.step_limit, 64);
        assert_eq!(w.num_states(), 64);
    }

    #[test]
    fn every_world_connects_start_to_goal() {
        for name in WORLD_NAMES {
            let w = make_world(name).unwrap();
            assert!(w.distance(w.start, w.goal, &[]).is_some(), "{name}");
            assert_eq!(make_world(name).unwrap().to_ascii().trim_end(), w.to_ascii().trim_end());
        }
    }

    #[test]
    fn unknown_world_lists_valid_names() {
        let err = make_world("maze").unwrap_err().to_string();
        assert!(err.contains("maze") && err.contains("four_rooms"), "{err}");
    }

    #[test]
    fn double_slit_needs_a_slit() {
        let w = make_world("double_slit").unwrap();
        assert_eq!(w.landmarks, vec![(2, 4), (6, 4)]);
        assert!(w.distance(w.start, w.goal, &[(2, 4)]).is_some());
        assert!(w.distance(w.start, w.goal, &[(6, 4)]).is_some());
        assert!(w.distance(w.start, w.goal, &[(2, 4), (6, 4)]).is_none());
        // Both slits are equally short.
        let via = |s: Cell| w.distance(w.start, s, &[]).unwrap() + w.distance(s, w.goal, &[]).unwrap();
        assert_eq!(via((2, 4)), via((6, 4)));
    }

    #[test]
    fn step_rules() {
        let w = make_world("empty").unwrap();
        let t = w.step(w.start, Action::Up, 0).unwrap();
        assert_eq!((t.next, t.reward, t.done), ((6, 0), 0.0, false));
        let t = w.step(w.start, Action::Left, 0).unwrap();
        assert_eq!(t.next, w.start);
        let t = w.step((0, 6), Action::Right, 3).unwrap();
        assert_eq!((t.next, t.reward, t.done), ((0, 7), 1.0, true));
        assert!(w.step(w.start, Action::Up, w.step_limit - 1).unwrap().done);
        let ds = make_world("double_slit").unwrap();
        assert_eq!(ds.step((4, 3), Action::Right, 0).unwrap().next, (4, 3));
        assert!(ds.step((4, 4), Action::Up, 0).is_err());
        assert!(w.step((9, 9), Action::Up, 0).is_err());
    }

    #[test]
    fn ascii_round_trip() {
        let w = make_world("four_rooms").unwrap();
        let again = Gridworld::from_ascii("four_rooms", &w.to_ascii()).unwrap();
        assert_eq!(again, Gridworld { landmarks: Vec::new(), ..w });
        assert!(Gridworld::from_ascii("bad", "S.\n.").is_err());
        assert!(Gridworld::from_ascii("bad", "S.x\n..G").is_err());
    }
}
