//! Grid maze layouts.
//!
//! A layout records, for each cell, which of its four walls are open. Layouts
//! are generated with a seeded recursive backtracker so a given
//! (width, height, seed) triple always produces the same maze, and they have
//! a plain-text form so a layout can be committed as data.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Direction bits: north, east, south, west.
pub const NORTH: u8 = 1;
pub const EAST: u8 = 2;
pub const SOUTH: u8 = 4;
pub const WEST: u8 = 8;

/// Order matches the four maze actions.
pub const DIRS: [u8; 4] = [NORTH, EAST, SOUTH, WEST];

/// Seed of the committed 10x10 layout below.
pub const MAZE_10X10_SEED: u64 = 20;

/// Fixed 10x10 layout used by the exploration experiments, generated once by
/// `MazeLayout::generate(10, 10, MAZE_10X10_SEED)` and committed as data.
/// `maze_layout_matches_committed_text` in the tests below keeps it honest.
pub const MAZE_10X10: &str = "\
446aaeac2c
57968543ad
53ad697aa9
52e952d6a8
3c383c57ac
696aa95569
56d6a8513c
55556c3aad
515793e869
3a93a83ab8
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    width: usize,
    height: usize,
    /// Open-direction bitmask per cell, row-major.
    open: Vec<u8>,
}

impl MazeLayout {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn open_mask(&self, x: usize, y: usize) -> u8 {
        self.open[self.index(x, y)]
    }

    /// Cell reached from (x, y) by the action with direction bit `dir`,
    /// or `None` if a wall or the border blocks it.
    pub fn neighbor(&self, x: usize, y: usize, dir: u8) -> Option<(usize, usize)> {
        if self.open[self.index(x, y)] & dir == 0 {
            return None;
        }
        match dir {
            NORTH if y > 0 => Some((x, y - 1)),
            EAST if x + 1 < self.width => Some((x + 1, y)),
            SOUTH if y + 1 < self.height => Some((x, y + 1)),
            WEST if x > 0 => Some((x - 1, y)),
            _ => None,
        }
    }

    /// Perfect maze via a seeded recursive backtracker: every cell reachable
    /// from every other, exactly one path between any two cells.
    pub fn generate(width: usize, height: usize, seed: u64) -> Self {
        assert!(width >= 2 && height >= 2, "maze needs at least 2x2 cells");
        let n = width * height;
        let mut open = vec![0u8; n];
        let mut visited = vec![false; n];
        let mut rng = RngStream::new(seed);
        let mut stack = vec![(0usize, 0usize)];
        visited[0] = true;
        while let Some(&(x, y)) = stack.last() {
            let mut candidates: Vec<(u8, usize, usize)> = Vec::with_capacity(4);
            if y > 0 && !visited[(y - 1) * width + x] {
                candidates.push((NORTH, x, y - 1));
            }
            if x + 1 < width && !visited[y * width + x + 1] {
                candidates.push((EAST, x + 1, y));
            }
            if y + 1 < height && !visited[(y + 1) * width + x] {
                candidates.push((SOUTH, x, y + 1));
            }
            if x > 0 && !visited[y * width + x - 1] {
                candidates.push((WEST, x - 1, y));
            }
            if candidates.is_empty() {
                stack.pop();
                continue;
            }
            let &(dir, nx, ny) = rng.choose(&candidates);
            open[y * width + x] |= dir;
            open[ny * width + nx] |= opposite(dir);
            visited[ny * width + nx] = true;
            stack.push((nx, ny));
        }
        Self {
            width,
            height,
            open,
        }
    }

    /// One hex digit per cell (the open-direction bitmask), one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(
                    char::from_digit(u32::from(self.open[self.index(x, y)]), 16)
                        .expect("mask < 16"),
                );
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Parse("empty maze text".into()));
        }
        let width = rows[0].trim().len();
        let height = rows.len();
        let mut open = Vec::with_capacity(width * height);
        for row in &rows {
            let row = row.trim();
            if row.len() != width {
                return Err(Error::Parse(format!(
                    "ragged maze row: expected {width} cells, got {}",
                    row.len()
                )));
            }
            for c in row.chars() {
                let mask = c
                    .to_digit(16)
                    .ok_or_else(|| Error::Parse(format!("bad maze cell digit {c:?}")))?;
                open.push(mask as u8);
            }
        }
        let layout = Self {
            width,
            height,
            open,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Walls must be consistent from both sides and never open to the border.
    fn validate(&self) -> Result<()> {
        for y in 0..self.height {
            for x in 0..self.width {
                let mask = self.open[self.index(x, y)];
                for &dir in &DIRS {
                    if mask & dir == 0 {
                        continue;
                    }
                    let (nx, ny) = match dir {
                        NORTH if y > 0 => (x, y - 1),
                        EAST if x + 1 < self.width => (x + 1, y),
                        SOUTH if y + 1 < self.height => (x, y + 1),
                        WEST if x > 0 => (x - 1, y),
                        _ => {
                            return Err(Error::Parse(format!(
                                "cell ({x}, {y}) opens through the border"
                            )))
                        }
                    };
                    if self.open[self.index(nx, ny)] & opposite(dir) == 0 {
                        return Err(Error::Parse(format!(
                            "one-sided wall between ({x}, {y}) and ({nx}, {ny})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn opposite(dir: u8) -> u8 {
    match dir {
        NORTH => SOUTH,
        SOUTH => NORTH,
        EAST => WEST,
        WEST => EAST,
        _ => unreachable!("single direction bit"),
    }
}
