//! Binary image masks and labeled part masks.

use serde::{Deserialize, Serialize};

/// Row-major boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            data,
        })
    }

    /// Mask of all pixels for which `f(u, v)` holds.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                if f(u, v) {
                    m.set(u, v, true);
                }
            }
        }
        m
    }

    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height && self.data[self.index(u, v)]
    }

    /// Membership for signed coordinates; out of bounds is `false`.
    pub fn get_i(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && self.get(u as u32, v as u32)
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let i = self.index(u, v);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Number of pixels true in both masks. Masks must share a shape.
    pub fn overlap(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    /// Coordinates of true pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Bounding box `(u_min, v_min, u_max, v_max)` of the true pixels.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        self.pixels().fold(None, |acc, (u, v)| {
            Some(match acc {
                None => (u, v, u, v),
                Some((a, b, c, d)) => (a.min(u), b.min(v), c.max(u), d.max(v)),
            })
        })
    }

    pub fn to_rle(&self) -> RleMask {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in &self.data {
            if b == current {
                run += 1;
            } else {
                counts.push(run);
                current = b;
                run = 1;
            }
        }
        counts.push(run);
        RleMask {
            width: self.width,
            height: self.height,
            counts,
        }
    }
}

/// Run-length encoding: alternating runs starting with `false`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn decode(&self) -> Result<BinaryMask, String> {
        let total = self.width as usize * self.height as usize;
        let mut data = Vec::with_capacity(total);
        let mut value = false;
        for &c in &self.counts {
            if data.len() + c as usize > total {
                return Err(format!("run lengths exceed {total} pixels"));
            }
            data.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        if data.len() != total {
            return Err(format!("run lengths cover {} of {total} pixels", data.len()));
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// A labeled part region in one camera's image.
#[derive(Clone, Debug, PartialEq)]
pub struct PartMask {
    pub id: u32,
    pub name: Option<String>,
    pub camera: String,
    pub mask: BinaryMask,
}

impl PartMask {
    pub fn new(id: u32, camera: impl Into<String>, mask: BinaryMask) -> Self {
        Self {
            id,
            name: None,
            camera: camera.into(),
            mask,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("part {}", self.id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        let m = BinaryMask::from_fn(7, 5, |u, v| (u + 2 * v) % 3 == 0 || u == 6);
        let rle = m.to_rle();
        assert_eq!(rle.decode().unwrap(), m);
        let empty = BinaryMask::new(3, 3);
        assert_eq!(empty.to_rle().counts, vec![9]);
        let full = BinaryMask::from_fn(2, 2, |_, _| true);
        assert_eq!(full.to_rle().counts, vec![0, 4]);
    }

    #[test]
    fn rle_rejects_bad_lengths() {
        let rle = RleMask {
            width: 2,
            height: 2,
            counts: vec![1, 1],
        };
        assert!(rle.decode().is_err());
        let rle = RleMask {
            width: 2,
            height: 2,
            counts: vec![3, 3],
        };
        assert!(rle.decode().is_err());
    }

    #[test]
    fn bounds_and_overlap() {
        let a = BinaryMask::from_fn(10, 10, |u, v| (2..5).contains(&u) && (3..4).contains(&v));
        assert_eq!(a.bounds(), Some((2, 3, 4, 3)));
        let b = BinaryMask::from_fn(10, 10, |u, _| u >= 4);
        assert_eq!(a.overlap(&b), 1);
        assert_eq!(BinaryMask::new(4, 4).bounds(), None);
    }
}
