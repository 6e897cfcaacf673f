use rand::Rng;

use super::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Number of dihedral augmentation codes: `code = rotations + 4·flip`.
pub const AUGMENT_CODES: u8 = 8;

const INVERSE: [u8; 8] = [0, 3, 2, 1, 4, 5, 6, 7];

/// Where a patch came from; enough to re-extract it exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    pub image: String,
    pub top: usize,
    pub left: usize,
    pub code: u8,
}

/// Paired input/target windows, each `channels × size × size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub origin: PatchOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn new(size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            size,
            in_channels,
            out_channels,
            patches: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn extend(&mut self, other: PatchSet) -> Result<()> {
        if (other.size, other.in_channels, other.out_channels) != (self.size, self.in_channels, self.out_channels) {
            return Err(Error::shape("patch sets differ in size or channel counts"));
        }
        self.patches.extend(other.patches);
        Ok(())
    }

    /// Stacks the selected patches into input and target batches.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        if indices.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let mut input = Vec::with_capacity(indices.len() * self.in_channels * self.size * self.size);
        let mut target = Vec::with_capacity(indices.len() * self.out_channels * self.size * self.size);
        for &i in indices {
            let p = self
                .patches
                .get(i)
                .ok_or_else(|| Error::Input(format!("patch index {i} out of range ({} patches)", self.len())))?;
            input.extend_from_slice(&p.input);
            target.extend_from_slice(&p.target);
        }
        Ok((
            Tensor4::from_vec(Shape4::new(indices.len(), self.in_channels, self.size, self.size), input)?,
            Tensor4::from_vec(Shape4::new(indices.len(), self.out_channels, self.size, self.size), target)?,
        ))
    }
}

/// Applies dihedral element `code` to every `size × size` channel plane:
/// `code % 4` counter-clockwise quarter turns, then a horizontal mirror when
/// `code >= 4`.
pub fn augment(data: &[f32], channels: usize, size: usize, code: u8) -> Result<Vec<f32>> {
    if code >= AUGMENT_CODES {
        return Err(Error::Input(format!("augmentation code {code} outside 0..8")));
    }
    if data.len() != channels * size * size {
        return Err(Error::shape(format!(
            "{} values for {channels} planes of {size}x{size}",
            data.len()
        )));
    }
    let n = size;
    let mut out = vec![0f32; data.len()];
    for c in 0..channels {
        let plane = &data[c * n * n..(c + 1) * n * n];
        let dst = &mut out[c * n * n..(c + 1) * n * n];
        for y in 0..n {
            for x in 0..n {
                let (mut ty, mut tx) = (y, x);
                for _ in 0..code % 4 {
                    (ty, tx) = (n - 1 - tx, ty);
                }
                if code >= 4 {
                    tx = n - 1 - tx;
                }
                dst[ty * n + tx] = plane[y * n + x];
            }
        }
    }
    Ok(out)
}

/// The code that undoes `code`.
pub fn inverse_code(code: u8) -> u8 {
    INVERSE[code as usize % 8]
}

/// The single code equivalent to applying `first` and then `second`.
pub fn compose_codes(first: u8, second: u8) -> u8 {
    let probe: Vec<f32> = (0..9).map(|v| v as f32).collect();
    let both = augment(&augment(&probe, 1, 3, first).expect("valid code"), 1, 3, second).expect("valid code");
    (0..AUGMENT_CODES)
        .find(|&c| augment(&probe, 1, 3, c).expect("valid code") == both)
        .expect("dihedral group is closed")
}

fn check_pair(input: &HsiCube, target: &HsiCube, size: usize) -> Result<()> {
    if (input.height(), input.width()) != (target.height(), target.width()) {
        return Err(Error::Input(format!(
            "input {}x{} and target {}x{} differ in size",
            input.height(),
            input.width(),
            target.height(),
            target.width()
        )));
    }
    if size == 0 || input.height() < size || input.width() < size {
        return Err(Error::Input(format!(
            "image {}x{} is smaller than a {size}x{size} patch",
            input.height(),
            input.width()
        )));
    }
    Ok(())
}

/// Re-extracts the patch described by `origin`.
pub fn extract_patch(input: &HsiCube, target: &HsiCube, origin: &PatchOrigin, size: usize) -> Result<Patch> {
    check_pair(input, target, size)?;
    let x = input.crop(origin.top, origin.left, size, size)?;
    let y = target.crop(origin.top, origin.left, size, size)?;
    Ok(Patch {
        input: augment(x.data(), input.bands(), size, origin.code)?,
        target: augment(y.data(), target.bands(), size, origin.code)?,
        origin: origin.clone(),
    })
}

/// Draws `count` windows with uniformly random offsets (and random dihedral
/// codes when `augmentation` is on) from one image pair.
pub fn sample_patches<R: Rng + ?Sized>(
    image: &str,
    input: &HsiCube,
    target: &HsiCube,
    count: usize,
    size: usize,
    augmentation: bool,
    rng: &mut R,
) -> Result<PatchSet> {
    check_pair(input, target, size)?;
    let mut set = PatchSet::new(size, input.bands(), target.bands());
    for _ in 0..count {
        let origin = PatchOrigin {
            image: image.to_string(),
            top: rng.gen_range(0..=input.height() - size),
            left: rng.gen_range(0..=input.width() - size),
            code: if augmentation { rng.gen_range(0..AUGMENT_CODES) } else { 0 },
        };
        set.patches.push(extract_patch(input, target, &origin, size)?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::super::test_cube;
    use super::*;
    use rand::SeedableRng;

    fn probe(channels: usize, n: usize) -> Vec<f32> {
        (0..channels * n * n).map(|v| v as f32).collect()
    }

    #[test]
    fn identity_and_quarter_turn() {
        let p = probe(2, 4);
        assert_eq!(augment(&p, 2, 4, 0).unwrap(), p);
        let mut q = p.clone();
        for _ in 0..4 {
            q = augment(&q, 2, 4, 1).unwrap();
        }
        assert_eq!(q, p);
        // 2x2 plane [a b; c d] turned counter-clockwise is [b d; a c].
        assert_eq!(augment(&[1.0, 2.0, 3.0, 4.0], 1, 2, 1).unwrap(), vec![2.0, 4.0, 1.0, 3.0]);
        assert_eq!(augment(&[1.0, 2.0, 3.0, 4.0], 1, 2, 4).unwrap(), vec![2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn group_table_is_exhaustively_consistent() {
        let p = probe(3, 5);
        let images: Vec<Vec<f32>> = (0..8).map(|c| augment(&p, 3, 5, c).unwrap()).collect();
        // All eight elements are distinct.
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(images[a], images[b]);
            }
        }
        for a in 0..8u8 {
            assert_eq!(augment(&images[a as usize], 3, 5, inverse_code(a)).unwrap(), p);
            assert_eq!(compose_codes(a, inverse_code(a)), 0);
            for b in 0..8u8 {
                let ab = augment(&images[a as usize], 3, 5, b).unwrap();
                assert_eq!(ab, images[compose_codes(a, b) as usize]);
                for c in 0..8u8 {
                    assert_eq!(
                        compose_codes(compose_codes(a, b), c),
                        compose_codes(a, compose_codes(b, c))
                    );
                }
            }
        }
    }

    #[test]
    fn provenance_replays_patch() {
        let x = test_cube(20, 24, 3, 1);
        let y = test_cube(20, 24, 7, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let set = sample_patches("img", &x, &y, 12, 8, true, &mut rng).unwrap();
        assert_eq!(set.len(), 12);
        for p in &set.patches {
            assert!(p.origin.top <= 12 && p.origin.left <= 16);
            assert_eq!(&extract_patch(&x, &y, &p.origin, 8).unwrap(), p);
        }
        let (bx, by) = set.batch(&[3, 0]).unwrap();
        assert_eq!(bx.shape(), Shape4::new(2, 3, 8, 8));
        assert_eq!(by.item(1), &set.patches[0].target[..]);
    }

    #[test]
    fn undersized_image_rejected() {
        let x = test_cube(6, 10, 3, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_patches("a", &x, &x, 1, 8, false, &mut rng), Err(Error::Input(_))));
    }
}
