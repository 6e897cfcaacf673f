use super::{Mode, Network};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// One tile along an axis: it is evaluated over `start..start + tile` and
/// writes only `own_start..own_end` of the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileSpan {
    pub start: usize,
    pub own_start: usize,
    pub own_end: usize,
}

/// Tiles step by `tile - overlap`; the last tile is pinned to the far edge.
/// Neighbouring tiles split their overlap at its midpoint, so every position
/// is owned by exactly one tile.
pub fn tile_layout(len: usize, tile: usize, overlap: usize) -> Result<Vec<TileSpan>> {
    if tile == 0 || overlap >= tile {
        return Err(Error::Param(format!("overlap {overlap} must be smaller than tile {tile}")));
    }
    if len < tile {
        return Err(Error::Input(format!(
            "extent {len} is smaller than one {tile}-pixel tile; pad the input first"
        )));
    }
    let step = tile - overlap;
    let mut starts = Vec::new();
    let mut s = 0;
    while s + tile < len {
        starts.push(s);
        s += step;
    }
    starts.push(len - tile);

    let mut spans = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let own_start = if i == 0 {
            0
        } else {
            let prev_end = starts[i - 1] + tile;
            (start + prev_end) / 2
        };
        let own_end = match starts.get(i + 1) {
            Some(&next) => (next + start + tile) / 2,
            None => len,
        };
        spans.push(TileSpan {
            start,
            own_start,
            own_end,
        });
    }
    Ok(spans)
}

/// Whole-image prediction from independently evaluated `tile × tile` tiles.
pub fn predict_tiled<T: Scalar>(
    network: &Network,
    params: &ParamStore<T>,
    image: &Tensor4<T>,
    tile: usize,
    overlap: usize,
) -> Result<Tensor4<T>> {
    let s = image.shape();
    if s.channels != network.spec().in_channels {
        return Err(Error::Input(format!(
            "image has {} channels, network expects {}",
            s.channels,
            network.spec().in_channels
        )));
    }
    if tile % network.spec().size_multiple() != 0 {
        return Err(Error::Param(format!(
            "tile {tile} is not a multiple of {}",
            network.spec().size_multiple()
        )));
    }
    let rows = tile_layout(s.height, tile, overlap)?;
    let cols = tile_layout(s.width, tile, overlap)?;
    let out_ch = network.spec().out_channels;
    let mut out = Tensor4::zeros(s.with_channels(out_ch))?;
    for r in &rows {
        for c in &cols {
            let patch = image.crop(r.start, c.start, tile, tile)?;
            let pred = network.forward(params, &patch, &mut Mode::Eval)?;
            for b in 0..s.batch {
                for ch in 0..out_ch {
                    for y in r.own_start..r.own_end {
                        let src = pred.offset(b, ch, y - r.start, c.own_start - c.start);
                        let dst = out.offset(b, ch, y, c.own_start);
                        let n = c.own_end - c.own_start;
                        let (src_data, dst_data) = (pred.data(), &mut out.data_mut()[dst..dst + n]);
                        dst_data.copy_from_slice(&src_data[src..src + n]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Index into `0..len` reached by mirroring `i` at both ends without
/// repeating the edge sample (`-1 → 1`, `len → len - 2`).
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Mirror-extends the right and bottom edges up to `height × width`.
pub fn reflect_pad<T: Scalar>(image: &Tensor4<T>, height: usize, width: usize) -> Result<Tensor4<T>> {
    let s = image.shape();
    if height < s.height || width < s.width {
        return Err(Error::shape(format!(
            "cannot pad {}x{} down to {height}x{width}",
            s.height, s.width
        )));
    }
    Tensor4::from_fn(s.with_height_width(height, width), |b, c, y, x| {
        image.get(b, c, reflect_index(y as isize, s.height), reflect_index(x as isize, s.width))
    })
}

/// Prediction for an image of any size: the image is reflect-padded up to
/// a multiple of the network's size multiple (and at least one tile),
/// predicted tile by tile and cropped back.
pub fn predict_image<T: Scalar>(
    network: &Network,
    params: &ParamStore<T>,
    image: &Tensor4<T>,
    tile: usize,
    overlap: usize,
) -> Result<Tensor4<T>> {
    let s = image.shape();
    let m = network.spec().size_multiple();
    let target = |n: usize| n.div_ceil(m).max(1).max(tile.div_ceil(m)) * m;
    let (ph, pw) = (target(s.height), target(s.width));
    if (ph, pw) == (s.height, s.width) {
        return predict_tiled(network, params, image, tile, overlap);
    }
    let padded = reflect_pad(image, ph, pw)?;
    predict_tiled(network, params, &padded, tile, overlap)?.crop(0, 0, s.height, s.width)
}
