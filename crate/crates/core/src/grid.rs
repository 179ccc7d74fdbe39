//! Row-major 2-D grids and cell addressing shared by the world, the map and
//! the planner.
//!
//! Rows run along +y and columns along +x; cell `(row, col)` covers
//! `[col·h, (col+1)·h) × [row·h, (row+1)·h)` in world meters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Center of the cell in world meters.
    pub fn center(self, cell_size: f64) -> (f64, f64) {
        ((self.col as f64 + 0.5) * cell_size, (self.row as f64 + 0.5) * cell_size)
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    /// Euclidean distance between cell centers in meters.
    pub fn metric_distance(self, other: Cell, cell_size: f64) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt() * cell_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data does not match dimensions");
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    /// Signed lookup; `None` when out of bounds.
    pub fn cell_at(&self, row: isize, col: isize) -> Option<Cell> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(Cell::new(row as usize, col as usize))
        }
    }

    pub fn get(&self, cell: Cell) -> &T {
        &self.data[self.index(cell)]
    }

    pub fn get_mut(&mut self, cell: Cell) -> &mut T {
        let i = self.index(cell);
        &mut self.data[i]
    }

    pub fn set(&mut self, cell: Cell, value: T) {
        let i = self.index(cell);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.data.len()).map(move |i| self.cell_of_index(i))
    }

    /// 4-connected in-bounds neighbors.
    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| self.cell_at(cell.row as isize + dr, cell.col as isize + dc))
    }

    /// 8-connected in-bounds neighbors, row-major order.
    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(isize, isize); 8] =
            [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| self.cell_at(cell.row as isize + dr, cell.col as isize + dc))
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }
}

/// Cell containing the world point `(x, y)`, if inside the grid.
pub fn cell_of_point(x: f64, y: f64, cell_size: f64, width: usize, height: usize) -> Option<Cell> {
    if !(x >= 0.0 && y >= 0.0) {
        return None;
    }
    let col = (x / cell_size).floor() as usize;
    let row = (y / cell_size).floor() as usize;
    (row < height && col < width).then_some(Cell::new(row, col))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::filled(7, 5, 0u8);
        for c in g.cells() {
            assert_eq!(g.cell_of_index(g.index(c)), c);
        }
    }

    #[test]
    fn neighbors_clip_at_border() {
        let g = Grid::filled(3, 3, ());
        assert_eq!(g.neighbors4(Cell::new(0, 0)).count(), 2);
        assert_eq!(g.neighbors8(Cell::new(0, 0)).count(), 3);
        assert_eq!(g.neighbors8(Cell::new(1, 1)).count(), 8);
    }

    #[test]
    fn point_lookup() {
        assert_eq!(cell_of_point(0.25, 0.05, 0.1, 10, 10), Some(Cell::new(0, 2)));
        assert_eq!(cell_of_point(-0.01, 0.05, 0.1, 10, 10), None);
        assert_eq!(cell_of_point(1.0, 0.05, 0.1, 10, 10), None);
    }
}
