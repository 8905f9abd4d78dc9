//! Crystal look-up tables.
//!
//! A [`FullClt`] stores one crystal ID per raw (x, y) address. A
//! [`BoundaryClt`] stores, for every horizontal line, the 22 x coordinates at
//! which the column component steps up, and for every vertical line the 22 y
//! coordinates at which the row component steps up. A stored boundary is the
//! first coordinate of the next region, so a component is the number of
//! boundaries `<=` the coordinate.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::error::DomainError;
use crate::event_model::{
    crystal_2d_to_id, crystal_id_to_2d, CrystalId, RawPosition, CRYSTALS_PER_SIDE, CRYSTAL_COUNT, POSITION_BITS,
    POSITION_SPAN,
};
use crate::formats::{self, FileHeader, FormatError};

pub const BOUNDARIES_PER_LINE: usize = CRYSTALS_PER_SIDE - 1;
pub const CLT_CELLS: usize = POSITION_SPAN * POSITION_SPAN;

pub type BoundaryLine = [u16; BOUNDARIES_PER_LINE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Lines of constant y; boundaries are x coordinates.
    X,
    /// Lines of constant x; boundaries are y coordinates.
    Y,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::X => f.write_str("x (line y"),
            Direction::Y => f.write_str("y (line x"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CltError {
    #[error("not separable in direction {direction} = {line}): {detail}")]
    NotSeparable { direction: Direction, line: usize, detail: String },
    #[error("cell ({x}, {y}) holds crystal id {id} > 528")]
    CellOutOfRange { x: usize, y: usize, id: u16 },
    #[error("crystal {0} covers no position")]
    MissingCrystal(u16),
    #[error("expected {expected} cells, got {found}")]
    CellCount { expected: usize, found: usize },
    #[error("bad boundaries in direction {direction} = {line}): {detail}")]
    BadBoundaries { direction: Direction, line: usize, detail: String },
}

/// Dense 512×512 crystal map indexed `[y][x]`.
#[derive(Clone, PartialEq, Eq)]
pub struct FullClt {
    cells: Vec<u16>,
}

impl fmt::Debug for FullClt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FullClt").field("cells", &self.cells.len()).finish()
    }
}

impl FullClt {
    /// Validates range and total coverage of all 529 crystals.
    pub fn from_cells(cells: Vec<u16>) -> Result<Self, CltError> {
        if cells.len() != CLT_CELLS {
            return Err(CltError::CellCount { expected: CLT_CELLS, found: cells.len() });
        }
        let mut seen = [false; CRYSTAL_COUNT];
        for (i, &id) in cells.iter().enumerate() {
            if id > CrystalId::MAX {
                return Err(CltError::CellOutOfRange { x: i % POSITION_SPAN, y: i / POSITION_SPAN, id });
            }
            seen[id as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CltError::MissingCrystal(missing as u16));
        }
        Ok(Self { cells })
    }

    /// Builds a map from a per-position (row, col) function.
    pub fn from_fn(mut f: impl FnMut(u16, u16) -> (u8, u8)) -> Result<Self, CltError> {
        let mut cells = Vec::with_capacity(CLT_CELLS);
        for y in 0..POSITION_SPAN as u16 {
            for x in 0..POSITION_SPAN as u16 {
                let (row, col) = f(x, y);
                let id = crystal_2d_to_id(row, col).map_err(|_| CltError::CellOutOfRange {
                    x: x as usize,
                    y: y as usize,
                    id: row as u16 * CRYSTALS_PER_SIDE as u16 + col as u16,
                })?;
                cells.push(id.get());
            }
        }
        Self::from_cells(cells)
    }

    /// The evenly divided grid: cell (row, col) covers
    /// `x in [round(512*col/23), round(512*(col+1)/23))`, likewise in y.
    pub fn uniform_grid() -> Self {
        let edges = uniform_boundaries();
        let component = |v: u16| edges.iter().filter(|&&b| b <= v).count() as u8;
        Self::from_fn(|x, y| (component(y), component(x))).expect("uniform grid covers all crystals")
    }

    #[inline]
    pub fn get(&self, x: u16, y: u16) -> CrystalId {
        CrystalId::new_unchecked(self.cells[y as usize * POSITION_SPAN + x as usize])
    }

    pub fn cells(&self) -> &[u16] {
        &self.cells
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FormatError> {
        let payload = formats::read_payload(r, &full_header(), CLT_CELLS * 2)?;
        let cells = formats::u16s_le(&payload).collect();
        Self::from_cells(cells).map_err(|e| FormatError::Content(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let payload: Vec<u8> = self.cells.iter().flat_map(|v| v.to_le_bytes()).collect();
        formats::write_file(w, &full_header(), &payload)
    }
}

fn full_header() -> FileHeader {
    FileHeader { magic: formats::MAGIC_FULL_CLT, n_bits: POSITION_BITS as u16, k: CRYSTAL_COUNT as u32, entry_bytes: 2 }
}

fn boundary_header() -> FileHeader {
    FileHeader { magic: formats::MAGIC_BOUNDARY_CLT, ..full_header() }
}

/// Boundaries of the uniform grid: `round(512*j/23)` for j = 1..=22.
pub fn uniform_boundaries() -> BoundaryLine {
    let mut line = [0u16; BOUNDARIES_PER_LINE];
    let span = POSITION_SPAN as u32;
    let side = CRYSTALS_PER_SIDE as u32;
    for (j, b) in line.iter_mut().enumerate() {
        let j = j as u32 + 1;
        *b = ((2 * span * j + side) / (2 * side)) as u16;
    }
    line
}

pub fn full_lookup(clt: &FullClt, pos: RawPosition) -> CrystalId {
    clt.get(pos.x(), pos.y())
}

/// Two-direction boundary compression of a separable CLT.
#[derive(Clone, PartialEq, Eq)]
pub struct BoundaryClt {
    x_boundaries: Vec<BoundaryLine>,
    y_boundaries: Vec<BoundaryLine>,
}

impl fmt::Debug for BoundaryClt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryClt")
            .field("x_line0", &self.x_boundaries[0])
            .field("y_line0", &self.y_boundaries[0])
            .finish()
    }
}

fn check_line(direction: Direction, line: usize, b: &BoundaryLine) -> Result<(), CltError> {
    let bad = |detail: String| CltError::BadBoundaries { direction, line, detail };
    if b[0] < 1 {
        return Err(bad("boundary at coordinate 0".into()));
    }
    if let Some(&last) = b.last() {
        if last as usize >= POSITION_SPAN {
            return Err(bad(format!("boundary {last} exceeds 9 bits")));
        }
    }
    if let Some(i) = b.windows(2).position(|w| w[0] >= w[1]) {
        return Err(bad(format!("not strictly increasing at index {}: {} >= {}", i, b[i], b[i + 1])));
    }
    Ok(())
}

impl BoundaryClt {
    pub fn new(x_boundaries: Vec<BoundaryLine>, y_boundaries: Vec<BoundaryLine>) -> Result<Self, CltError> {
        for (direction, lines) in [(Direction::X, &x_boundaries), (Direction::Y, &y_boundaries)] {
            if lines.len() != POSITION_SPAN {
                return Err(CltError::BadBoundaries {
                    direction,
                    line: lines.len(),
                    detail: format!("expected {POSITION_SPAN} lines"),
                });
            }
            for (i, b) in lines.iter().enumerate() {
                check_line(direction, i, b)?;
            }
        }
        Ok(Self { x_boundaries, y_boundaries })
    }

    pub fn uniform_grid() -> Self {
        let line = uniform_boundaries();
        Self { x_boundaries: vec![line; POSITION_SPAN], y_boundaries: vec![line; POSITION_SPAN] }
    }

    /// Boundaries of the horizontal line at `y`.
    pub fn x_line(&self, y: u16) -> &BoundaryLine {
        &self.x_boundaries[y as usize]
    }

    /// Boundaries of the vertical line at `x`.
    pub fn y_line(&self, x: u16) -> &BoundaryLine {
        &self.y_boundaries[x as usize]
    }

    /// Replaces one line, as done by the LUT download command.
    pub fn set_line(&mut self, direction: Direction, line: u16, b: BoundaryLine) -> Result<(), CltError> {
        check_line(direction, line as usize, &b)?;
        let lines = match direction {
            Direction::X => &mut self.x_boundaries,
            Direction::Y => &mut self.y_boundaries,
        };
        let slot = lines.get_mut(line as usize).ok_or(CltError::BadBoundaries {
            direction,
            line: line as usize,
            detail: "line index out of range".into(),
        })?;
        *slot = b;
        Ok(())
    }

    /// Expands back into the dense form.
    pub fn to_full(&self) -> Result<FullClt, CltError> {
        FullClt::from_fn(|x, y| {
            let id = boundary_lookup(self, RawPosition::new_unchecked(x, y));
            crystal_id_to_2d(id)
        })
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FormatError> {
        let per_dir = POSITION_SPAN * BOUNDARIES_PER_LINE;
        let payload = formats::read_payload(r, &boundary_header(), 2 * per_dir * 2)?;
        let values: Vec<u16> = formats::u16s_le(&payload).collect();
        if let Some(v) = values.iter().find(|&&v| v as usize >= POSITION_SPAN) {
            return Err(FormatError::Content(format!("boundary value {v} exceeds 9 bits")));
        }
        let to_lines = |vals: &[u16]| -> Vec<BoundaryLine> {
            vals.chunks_exact(BOUNDARIES_PER_LINE).map(|c| c.try_into().unwrap()).collect()
        };
        Self::new(to_lines(&values[..per_dir]), to_lines(&values[per_dir..]))
            .map_err(|e| FormatError::Content(e.to_string()))
    }

    /// x-direction block first, then y-direction; 22 u16 LE values per line.
    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let payload: Vec<u8> = self
            .x_boundaries
            .iter()
            .chain(self.y_boundaries.iter())
            .flat_map(|line| line.iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        formats::write_file(w, &boundary_header(), &payload)
    }
}

/// Number of entries in `line` that are `<= v`.
#[inline]
fn count_le(line: &BoundaryLine, v: u16) -> u8 {
    // Branch-free so the compiler emits a vector compare + horizontal add.
    line.iter().map(|&b| (b <= v) as u8).sum()
}

#[inline]
pub fn boundary_lookup(b: &BoundaryClt, pos: RawPosition) -> CrystalId {
    let col = count_le(&b.x_boundaries[pos.y() as usize], pos.x());
    let row = count_le(&b.y_boundaries[pos.x() as usize], pos.y());
    CrystalId::new_unchecked(row as u16 * CRYSTALS_PER_SIDE as u16 + col as u16)
}

/// Scans one line of components and returns the positions where each step
/// from `c` to `c + 1` happens.
fn transitions(
    direction: Direction,
    line: usize,
    components: impl Iterator<Item = u8>,
) -> Result<BoundaryLine, CltError> {
    let fail = |detail: String| CltError::NotSeparable { direction, line, detail };
    let mut out = [0u16; BOUNDARIES_PER_LINE];
    let mut current = 0u8;
    let mut found = 0usize;
    for (coord, c) in components.enumerate() {
        if coord == 0 {
            if c != 0 {
                return Err(fail(format!("line starts in component {c}, expected 0")));
            }
            continue;
        }
        if c == current {
            continue;
        }
        if c != current + 1 {
            return Err(fail(format!("component jumps {current} -> {c} at coordinate {coord}")));
        }
        out[found] = coord as u16;
        found += 1;
        current = c;
    }
    if found != BOUNDARIES_PER_LINE {
        return Err(fail(format!("{} runs, expected {}", found + 1, CRYSTALS_PER_SIDE)));
    }
    Ok(out)
}

/// Resolves a dense CLT into its two boundary CLTs.
///
/// Stage 1 splits each id into (row, col); stage 2 projects the col
/// component along each horizontal line and the row component along each
/// vertical line; stage 3 records where each projected component steps up.
pub fn decompose(clt: &FullClt) -> Result<BoundaryClt, CltError> {
    let comps: Vec<(u8, u8)> = clt.cells.iter().map(|&id| crystal_id_to_2d(CrystalId::new_unchecked(id))).collect();

    let mut x_boundaries = Vec::with_capacity(POSITION_SPAN);
    for y in 0..POSITION_SPAN {
        let row = &comps[y * POSITION_SPAN..(y + 1) * POSITION_SPAN];
        x_boundaries.push(transitions(Direction::X, y, row.iter().map(|c| c.1))?);
    }
    let mut y_boundaries = Vec::with_capacity(POSITION_SPAN);
    for x in 0..POSITION_SPAN {
        let column = (0..POSITION_SPAN).map(|y| comps[y * POSITION_SPAN + x].0);
        y_boundaries.push(transitions(Direction::Y, x, column)?);
    }
    Ok(BoundaryClt { x_boundaries, y_boundaries })
}

/// Storage required by the two table layouts for one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct MemoryFootprint {
    pub full_bits: u64,
    pub boundary_bits: u64,
}

/// Bits in one Mb as used in memory budgets.
pub const BITS_PER_MB: f64 = (1u64 << 20) as f64;

impl MemoryFootprint {
    pub fn ratio(&self) -> f64 {
        self.full_bits as f64 / self.boundary_bits as f64
    }

    pub fn full_mb(&self) -> f64 {
        self.full_bits as f64 / BITS_PER_MB
    }

    pub fn boundary_mb(&self) -> f64 {
        self.boundary_bits as f64 / BITS_PER_MB
    }
}

/// `full = 2^(2n) * ceil(log2 k)`, `boundary = 2 * 2^n * (sqrt(k) - 1) * n`.
pub fn footprint(n_bits: u32, k_crystals: u64) -> Result<MemoryFootprint, DomainError> {
    if !(1..=31).contains(&n_bits) {
        return Err(DomainError::BitWidth(n_bits));
    }
    let side = k_crystals.isqrt();
    if side * side != k_crystals {
        return Err(DomainError::NotSquare(k_crystals));
    }
    if side < 2 {
        return Err(DomainError::TooFewCrystals(k_crystals));
    }
    let id_bits = u64::BITS - (k_crystals - 1).leading_zeros();
    let lines = 1u64 << n_bits;
    Ok(MemoryFootprint {
        full_bits: lines * lines * id_bits as u64,
        boundary_bits: 2 * lines * (side - 1) * n_bits as u64,
    })
}

/// Smoothly warped grids: every line keeps 22 strictly increasing
/// boundaries, so the induced dense CLT is always separable.
pub mod synthetic {
    use super::*;

    /// Maximum displacement of a warped boundary from the uniform grid.
    const MAX_WARP: f64 = 7.0;

    fn warped_lines<R: Rng>(rng: &mut R) -> Vec<BoundaryLine> {
        let base = uniform_boundaries();
        // Each boundary drifts along the line with a low-order sinusoid.
        let params: Vec<(f64, f64, f64, f64)> = (0..BOUNDARIES_PER_LINE)
            .map(|_| {
                (
                    rng.gen_range(0.0..MAX_WARP),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        (0..POSITION_SPAN)
            .map(|line| {
                let t = line as f64 / POSITION_SPAN as f64;
                let mut out = [0u16; BOUNDARIES_PER_LINE];
                for (j, b) in out.iter_mut().enumerate() {
                    let (amp, freq, phase, tilt) = params[j];
                    let warp = (amp * (std::f64::consts::TAU * freq * t + phase).sin() + tilt * (t - 0.5) * 2.0)
                        .clamp(-MAX_WARP, MAX_WARP);
                    *b = (base[j] as f64 + warp).round() as u16;
                }
                out
            })
            .collect()
    }

    /// A random separable CLT in boundary form.
    pub fn random_boundary_clt<R: Rng>(rng: &mut R) -> BoundaryClt {
        let x = warped_lines(rng);
        let y = warped_lines(rng);
        BoundaryClt::new(x, y).expect("warp stays below half the grid pitch")
    }

    /// A random separable CLT in dense form, painted cell by cell.
    pub fn random_full_clt<R: Rng>(rng: &mut R) -> (FullClt, BoundaryClt) {
        let b = random_boundary_clt(rng);
        let full = FullClt::from_fn(|x, y| {
            let col = b.x_boundaries[y as usize].iter().take_while(|&&e| e <= x).count();
            let row = b.y_boundaries[x as usize].iter().take_while(|&&e| e <= y).count();
            (row as u8, col as u8)
        })
        .expect("warped grid covers all crystals");
        (full, b)
    }

    /// Centre of a crystal's cell in raw-position units for a boundary CLT,
    /// taken at the lines through the uniform-grid centre.
    pub fn crystal_center(b: &BoundaryClt, id: CrystalId) -> (f64, f64) {
        let (row, col) = crystal_id_to_2d(id);
        let span = POSITION_SPAN as f64;
        let side = CRYSTALS_PER_SIDE as f64;
        let guess_x = (col as f64 + 0.5) * span / side;
        let guess_y = (row as f64 + 0.5) * span / side;
        let interval = |line: &BoundaryLine, c: u8| -> (f64, f64) {
            let lo = if c == 0 { 0 } else { line[c as usize - 1] };
            let hi = if c as usize == BOUNDARIES_PER_LINE { POSITION_SPAN as u16 } else { line[c as usize] };
            (lo as f64, hi as f64)
        };
        let (x0, x1) = interval(b.x_line(guess_y as u16), col);
        let (y0, y1) = interval(b.y_line(guess_x as u16), row);
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pos(x: u16, y: u16) -> RawPosition {
        RawPosition::new(x, y).unwrap()
    }

    #[test]
    fn uniform_full_lookup_examples() {
        let clt = FullClt::uniform_grid();
        assert_eq!(full_lookup(&clt, pos(0, 0)).get(), 0);
        assert_eq!(full_lookup(&clt, pos(511, 511)).get(), 528);
        // Brute-force region scan: the cell containing 256 is the one whose
        // [lo, hi) interval spans it.
        let edges: Vec<u32> = (0..=23).map(|j| (1024 * j + 23) / 46).collect();
        let comp = edges.windows(2).position(|w| w[0] <= 256 && 256 < w[1]).unwrap();
        assert_eq!(comp, 11);
        assert_eq!(full_lookup(&clt, pos(256, 256)).get(), 264);
    }

    #[test]
    fn uniform_boundaries_from_transition_scan() {
        let clt = FullClt::uniform_grid();
        let b = decompose(&clt).unwrap();
        // Independent scan of the dense grid for every x where the id changes.
        let scan: Vec<u16> = (1..512u16).filter(|&x| clt.get(x, 100) != clt.get(x - 1, 100)).collect();
        let expected: Vec<u16> = (1..=22u32).map(|j| ((512.0 * j as f64 / 23.0).round()) as u16).collect();
        assert_eq!(scan, expected);
        for y in 0..512 {
            assert_eq!(b.x_line(y).to_vec(), expected);
            assert_eq!(b.y_line(y).to_vec(), expected);
        }
        assert_eq!(b, BoundaryClt::uniform_grid());
    }

    #[test]
    fn skipped_component_is_not_separable() {
        let mut cells = FullClt::uniform_grid().cells().to_vec();
        let edges = uniform_boundaries();
        // On line y = 40 overwrite the col-1 run with col 2.
        let y = 40usize;
        for x in edges[0] as usize..edges[1] as usize {
            cells[y * 512 + x] += 1;
        }
        let clt = FullClt::from_cells(cells).unwrap();
        match decompose(&clt) {
            Err(CltError::NotSeparable { direction: Direction::X, line: 40, detail }) => {
                assert!(detail.contains("0 -> 2"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn not_separable_message_names_line_and_direction() {
        let mut cells = FullClt::uniform_grid().cells().to_vec();
        // A stray crystal-0 cell breaks the row sequence of vertical line x = 7.
        cells[300 * 512 + 7] = 0;
        let err = decompose(&FullClt::from_cells(cells).unwrap()).unwrap_err();
        assert!(matches!(err, CltError::NotSeparable { direction: Direction::Y, line: 7, .. }));
        let msg = err.to_string();
        assert!(msg.contains("y (line x = 7)"), "{msg}");
    }

    #[test]
    fn full_clt_validation() {
        assert!(matches!(FullClt::from_cells(vec![0; 10]), Err(CltError::CellCount { .. })));
        assert_eq!(FullClt::from_cells(vec![0; CLT_CELLS]).unwrap_err(), CltError::MissingCrystal(1));
        let mut cells = FullClt::uniform_grid().cells().to_vec();
        cells[5] = 529;
        assert!(matches!(FullClt::from_cells(cells), Err(CltError::CellOutOfRange { x: 5, y: 0, id: 529 })));
    }

    #[test]
    fn boundary_validation() {
        let mut line = uniform_boundaries();
        let mut b = BoundaryClt::uniform_grid();
        line[0] = 0;
        assert!(b.set_line(Direction::X, 3, line).is_err());
        let mut line = uniform_boundaries();
        line[5] = line[4];
        assert!(b.set_line(Direction::Y, 3, line).is_err());
        let mut line = uniform_boundaries();
        line[21] = 512;
        assert!(b.set_line(Direction::Y, 3, line).is_err());
        assert!(b.set_line(Direction::Y, 512, uniform_boundaries()).is_err());
    }

    #[test]
    fn origin_and_far_corner() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = synthetic::random_boundary_clt(&mut rng);
        assert_eq!(boundary_lookup(&b, pos(0, 0)).get(), 0);
        let u = BoundaryClt::uniform_grid();
        assert_eq!(boundary_lookup(&u, pos(511, 511)).get(), 528);
    }

    #[test]
    fn random_positions_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (full, _) = synthetic::random_full_clt(&mut rng);
            let b = decompose(&full).unwrap();
            for _ in 0..1000 {
                let p = pos(rng.gen_range(0..512), rng.gen_range(0..512));
                assert_eq!(boundary_lookup(&b, p), full_lookup(&full, p));
            }
        }
    }

    #[test]
    fn decompose_recovers_generator_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (full, b) = synthetic::random_full_clt(&mut rng);
        assert_eq!(decompose(&full).unwrap(), b);
        assert_eq!(b.to_full().unwrap(), full);
    }

    #[test]
    fn monotone_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = synthetic::random_boundary_clt(&mut rng);
        for line in 0..512u16 {
            let mut last = (0, 0);
            for v in 0..512u16 {
                let (_, col) = crystal_id_to_2d(boundary_lookup(&b, pos(v, line)));
                let (row, _) = crystal_id_to_2d(boundary_lookup(&b, pos(line, v)));
                assert!(col >= last.0 && row >= last.1);
                last = (col, row);
            }
        }
    }

    #[test]
    fn footprint_examples() {
        let f = footprint(9, 529).unwrap();
        assert_eq!(f.full_bits, 2_621_440);
        assert_eq!(f.boundary_bits, 202_752);
        assert_eq!(f.full_mb(), 2.5);
        assert!((f.ratio() - 12.93).abs() < 0.01);
        let f = footprint(1, 4).unwrap();
        assert_eq!((f.full_bits, f.boundary_bits), (8, 4));
        assert_eq!(footprint(9, 530), Err(DomainError::NotSquare(530)));
        assert_eq!(footprint(9, 1), Err(DomainError::TooFewCrystals(1)));
        assert_eq!(footprint(0, 4), Err(DomainError::BitWidth(0)));
    }

    #[test]
    fn file_round_trip_and_nine_bit_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (full, b) = synthetic::random_full_clt(&mut rng);

        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 512 * 22 * 2);
        assert!(formats::u16s_le(&buf[16..]).all(|v| v < 512));
        assert_eq!(BoundaryClt::read_from(&buf[..]).unwrap(), b);
        // Setting bit 9 of any stored value is rejected.
        let mut bad = buf.clone();
        bad[17] |= 0x02;
        assert!(matches!(BoundaryClt::read_from(&bad[..]), Err(FormatError::Content(_))));

        let mut buf = Vec::new();
        full.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 262_144 * 2);
        assert_eq!(FullClt::read_from(&buf[..]).unwrap(), full);
    }

    #[test]
    fn decompose_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (full, _) = synthetic::random_full_clt(&mut rng);
        let mut a = Vec::new();
        let mut b = Vec::new();
        decompose(&full).unwrap().write_to(&mut a).unwrap();
        decompose(&full).unwrap().write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
