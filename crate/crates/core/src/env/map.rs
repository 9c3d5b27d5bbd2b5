use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::Action;

/// Grid coordinate. Ordered row-major: by `y`, then `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Ord for Pos {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pos {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Free,
    Wall,
    Trap,
    Goal,
}

impl CellKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, CellKind::Trap | CellKind::Goal)
    }

    fn symbol(self) -> char {
        match self {
            CellKind::Free => '.',
            CellKind::Wall => '#',
            CellKind::Trap => 'T',
            CellKind::Goal => 'G',
        }
    }
}

/// Static world layout. Construct through [`parse_map`] or [`GridMap::new`],
/// both of which enforce the layout invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    name: String,
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    start: Pos,
}

impl GridMap {
    pub fn new(name: impl Into<String>, width: usize, height: usize, cells: Vec<CellKind>, start: Pos) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("map must have at least one cell".into()));
        }
        if cells.len() != width * height {
            return Err(Error::Validation(format!(
                "expected {} cells for a {width}x{height} map, got {}",
                width * height,
                cells.len()
            )));
        }
        let map = GridMap { name: name.into(), width, height, cells, start };
        if !map.in_bounds(start.x as isize, start.y as isize) || map.cell(start) != CellKind::Free {
            return Err(Error::Validation(format!("start {start} is not a free in-bounds cell")));
        }
        if !map.cells.contains(&CellKind::Goal) {
            return Err(Error::Validation("map has no goal cell".into()));
        }
        Ok(map)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Pos {
        self.start
    }

    pub fn cell(&self, p: Pos) -> CellKind {
        self.cells[p.y * self.width + p.x]
    }

    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Cell kind at signed coordinates, `None` when off the map.
    pub fn get(&self, x: isize, y: isize) -> Option<CellKind> {
        self.in_bounds(x, y).then(|| self.cells[y as usize * self.width + x as usize])
    }

    /// Row-major index of an in-bounds position.
    pub fn index(&self, p: Pos) -> usize {
        p.y * self.width + p.x
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Pos::new(x, y)))
    }

    /// Free cells in row-major order. These are the non-terminal states.
    pub fn free_cells(&self) -> Vec<Pos> {
        self.positions().filter(|&p| self.cell(p) == CellKind::Free).collect()
    }

    /// Where a move from `p` lands: walls and the map edge leave the agent in place.
    pub fn destination(&self, p: Pos, action: Action) -> Pos {
        let (dx, dy) = action.delta();
        let (nx, ny) = (p.x as isize + dx, p.y as isize + dy);
        match self.get(nx, ny) {
            Some(CellKind::Wall) | None => p,
            Some(_) => Pos::new(nx as usize, ny as usize),
        }
    }

    /// Map rendered as row strings, start marked with `S`.
    pub fn rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| {
                        let p = Pos::new(x, y);
                        if p == self.start {
                            'S'
                        } else {
                            self.cell(p).symbol()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name: {}", self.name)?;
        for row in self.rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Parses the ASCII map format: an optional `name: <id>` header followed by
/// equal-length rows using `.` free, `#` wall, `T` trap, `G` goal and `S` start.
pub fn parse_map(text: &str) -> Result<GridMap> {
    let mut name = None;
    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if rows.is_empty() && name.is_none() {
            if let Some(rest) = line.strip_prefix("name:") {
                let id = rest.trim();
                if id.is_empty() {
                    return Err(Error::parse(i + 1, "empty map name"));
                }
                name = Some(id.to_string());
                continue;
            }
        }
        rows.push((i + 1, line));
    }
    let Some(&(_, first)) = rows.first() else {
        return Err(Error::Validation("map has no rows".into()));
    };
    let width = first.len();
    let mut cells = Vec::with_capacity(width * rows.len());
    let mut starts = Vec::new();
    for (y, &(line_no, row)) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::parse(line_no, format!("row has {} cells, expected {width}", row.len())));
        }
        for (x, ch) in row.chars().enumerate() {
            let kind = match ch {
                '.' => CellKind::Free,
                '#' => CellKind::Wall,
                'T' => CellKind::Trap,
                'G' => CellKind::Goal,
                'S' => {
                    starts.push(Pos::new(x, y));
                    CellKind::Free
                }
                other => return Err(Error::parse(line_no, format!("unknown cell symbol {other:?}"))),
            };
            cells.push(kind);
        }
    }
    let start = match starts.as_slice() {
        [s] => *s,
        [] => return Err(Error::Validation("map has no start cell".into())),
        _ => return Err(Error::Validation(format!("map has {} start cells", starts.len()))),
    };
    GridMap::new(name.unwrap_or_else(|| "unnamed".into()), width, rows.len(), cells, start)
}
