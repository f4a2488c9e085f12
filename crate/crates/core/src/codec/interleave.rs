use super::config::LayerProtection;

/// Layer length rounded up to a whole number of groups.
pub fn padded_len(layer_size: usize, group_size: usize) -> usize {
    layer_size.div_ceil(group_size) * group_size
}

/// Interleaved stream order for a layer of `layer_size` weights.
///
/// Entry `p` is the original index feeding stream position `p`. The stream
/// visits residue classes modulo `stride` in order (`k, k + stride,
/// k + 2*stride, ...` for `k = 0, 1, ...`), then every index is shifted by
/// `offset` modulo the padded length. Indices `>= layer_size` are
/// zero-valued pad slots.
pub fn interleave_indices(
    layer_size: usize,
    group_size: usize,
    stride: usize,
    offset: usize,
) -> Vec<usize> {
    let padded = padded_len(layer_size, group_size);
    let mut out = Vec::with_capacity(padded);
    for k in 0..stride.min(padded) {
        out.extend((k..padded).step_by(stride).map(|i| (i + offset) % padded));
    }
    out
}

/// Group membership of one layer under a protection setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGrouping {
    layer_size: usize,
    group_size: usize,
    /// Stream position -> original index.
    order: Vec<usize>,
    /// Original index -> stream position.
    position: Vec<usize>,
}

impl LayerGrouping {
    pub fn new(layer_size: usize, cfg: &LayerProtection) -> Self {
        let g = cfg.group_size;
        let order = if cfg.interleave {
            interleave_indices(layer_size, g, cfg.stride, cfg.offset)
        } else {
            (0..padded_len(layer_size, g)).collect()
        };
        let mut position = vec![0; order.len()];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        Self {
            layer_size,
            group_size: g,
            order,
            position,
        }
    }

    pub fn layer_size(&self) -> usize {
        self.layer_size
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_count(&self) -> usize {
        self.order.len() / self.group_size
    }

    /// `(group, position within group)` of original weight `index`.
    pub fn locate(&self, index: usize) -> (usize, usize) {
        let p = self.position[index];
        (p / self.group_size, p % self.group_size)
    }

    /// Original indices of group `g` in stream order, pad slots as `None`.
    pub fn slots(&self, g: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let n = self.layer_size;
        self.order[g * self.group_size..(g + 1) * self.group_size]
            .iter()
            .map(move |&i| (i < n).then_some(i))
    }

    /// Real (non-pad) members of group `g`.
    pub fn members(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.slots(g).flatten()
    }
}
