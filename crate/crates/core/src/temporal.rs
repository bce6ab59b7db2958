//! Displaced frame differences between adjacent frames and their MSCN/GGD
//! statistics.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Result, VqaError};
use crate::nss::{compute_mscn, fit_ggd_or_fallback, Field2d, GgdFit};
use crate::video::LumaFrame;

/// Smallest frame side for which the cropped difference still fits the MSCN window.
pub const MIN_PAIR_SIDE: usize = 9;

/// One-pixel displacement applied to the later frame of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DisplacementDirection {
    pub dx: i8,
    pub dy: i8,
}

impl DisplacementDirection {
    /// Non-displaced difference.
    pub const D0: Self = Self::new(0, 0);
    pub const D1: Self = Self::new(-1, -1);
    pub const D2: Self = Self::new(1, -1);
    pub const D3: Self = Self::new(-1, 1);
    pub const D4: Self = Self::new(1, 1);
    pub const D5: Self = Self::new(-1, 0);
    pub const D6: Self = Self::new(1, 0);
    pub const D7: Self = Self::new(0, -1);
    pub const D8: Self = Self::new(0, 1);

    /// All nine directions in label order.
    pub const ALL: [Self; 9] = [
        Self::D0,
        Self::D1,
        Self::D2,
        Self::D3,
        Self::D4,
        Self::D5,
        Self::D6,
        Self::D7,
        Self::D8,
    ];

    pub const fn new(dx: i8, dy: i8) -> Self {
        DisplacementDirection { dx, dy }
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; 9] = ["D0", "D1", "D2", "D3", "D4", "D5", "D6", "D7", "D8"];
        let idx = Self::ALL
            .iter()
            .position(|&d| d == self)
            .expect("displacement components lie in -1..=1");
        LABELS[idx]
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.label() == label)
    }

    pub fn is_valid(self) -> bool {
        (-1..=1).contains(&self.dx) && (-1..=1).contains(&self.dy)
    }
}

impl fmt::Display for DisplacementDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:+},{:+})", self.label(), self.dx, self.dy)
    }
}

/// The direction families used by the model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSet {
    /// The four diagonals D1..D4.
    Diagonal4,
    /// Non-displaced difference plus the four cardinal shifts.
    Cardinal4Center,
    /// Non-displaced difference plus all eight unit shifts.
    All8Center,
}

impl DirectionSet {
    pub fn directions(self) -> &'static [DisplacementDirection] {
        use DisplacementDirection as D;
        const DIAGONAL: [D; 4] = [D::D1, D::D2, D::D3, D::D4];
        const CARDINAL: [D; 5] = [D::D0, D::D5, D::D6, D::D7, D::D8];
        match self {
            DirectionSet::Diagonal4 => &DIAGONAL,
            DirectionSet::Cardinal4Center => &CARDINAL,
            DirectionSet::All8Center => &D::ALL,
        }
    }
}

/// Difference signal over the frame interior (one-pixel border cropped).
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DifferenceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

impl Field2d for DifferenceField {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn real_values(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self.values)
    }
}

fn check_pair(frame_t: &LumaFrame, frame_t1: &LumaFrame) -> Result<()> {
    let dims = (frame_t.width(), frame_t.height());
    if dims != (frame_t1.width(), frame_t1.height()) {
        return Err(VqaError::Shape(format!(
            "frame pair dims differ: {}x{} vs {}x{}",
            dims.0,
            dims.1,
            frame_t1.width(),
            frame_t1.height()
        )));
    }
    if dims.0 < MIN_PAIR_SIDE || dims.1 < MIN_PAIR_SIDE {
        return Err(VqaError::DegenerateInput(format!(
            "{}x{} frames; pairs need at least {MIN_PAIR_SIDE}x{MIN_PAIR_SIDE}",
            dims.0, dims.1
        )));
    }
    Ok(())
}

/// `frame_t(x, y) - frame_t1(x + dx, y + dy)` over the interior.
///
/// Output pixel `(u, v)` corresponds to source pixel `(u + 1, v + 1)`.
pub fn displaced_difference(
    frame_t: &LumaFrame,
    frame_t1: &LumaFrame,
    dir: DisplacementDirection,
) -> Result<DifferenceField> {
    check_pair(frame_t, frame_t1)?;
    if !dir.is_valid() {
        return Err(VqaError::Validation(format!(
            "displacement ({}, {}) exceeds one pixel",
            dir.dx, dir.dy
        )));
    }
    let (w, h) = (frame_t.width(), frame_t.height());
    let (ow, oh) = (w - 2, h - 2);
    let a = frame_t.samples();
    let b = frame_t1.samples();
    let mut values = Vec::with_capacity(ow * oh);
    for y in 1..h - 1 {
        let ra = &a[y * w + 1..y * w + w - 1];
        let by = (y as isize + dir.dy as isize) as usize;
        let start = (by * w) as isize + 1 + dir.dx as isize;
        let rb = &b[start as usize..start as usize + ow];
        values.extend(ra.iter().zip(rb).map(|(&p, &q)| f64::from(p) - f64::from(q)));
    }
    Ok(DifferenceField {
        width: ow,
        height: oh,
        values,
    })
}

/// GGD fit to the MSCN coefficients of each displaced difference, in the order given.
///
/// Constant difference signals yield [`GgdFit::FALLBACK`].
pub fn nvs_fits_for_pair(
    frame_t: &LumaFrame,
    frame_t1: &LumaFrame,
    directions: &[DisplacementDirection],
) -> Result<Vec<(DisplacementDirection, GgdFit)>> {
    check_pair(frame_t, frame_t1)?;
    directions
        .iter()
        .map(|&dir| {
            let diff = displaced_difference(frame_t, frame_t1, dir)?;
            let mscn = compute_mscn(&diff)?;
            Ok((dir, fit_ggd_or_fallback(mscn.coefficients())?))
        })
        .collect()
}
