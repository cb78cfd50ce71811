/// Channels-last feature map: `data[(row * w + col) * c + channel]`.
///
/// Viewed as a token matrix it is `[h * w, c]`, which is what every per-token
/// layer operates on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w * c, "feature map buffer size");
        Self { h, w, c, data }
    }

    pub fn from_slice(img: &crate::Slice) -> Self {
        let (h, w) = img.dim();
        Self::from_vec(h, w, 1, img.iter().copied().collect())
    }

    /// Single-channel map back to an image.
    pub fn to_slice(&self) -> crate::Slice {
        assert_eq!(self.c, 1, "to_slice needs a single channel");
        crate::Slice::from_shape_vec((self.h, self.w), self.data.clone())
            .expect("shape matches buffer")
    }

    pub fn tokens(&self) -> usize {
        self.h * self.w
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn added(&self, other: &FeatureMap) -> FeatureMap {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Concatenates along channels.
    pub fn concat_channels(&self, other: &FeatureMap) -> FeatureMap {
        assert!(self.h == other.h && self.w == other.w);
        let c = self.c + other.c;
        let mut data = Vec::with_capacity(self.tokens() * c);
        for t in 0..self.tokens() {
            data.extend_from_slice(&self.data[t * self.c..(t + 1) * self.c]);
            data.extend_from_slice(&other.data[t * other.c..(t + 1) * other.c]);
        }
        FeatureMap::from_vec(self.h, self.w, c, data)
    }

    /// Inverse of [`concat_channels`](Self::concat_channels).
    pub fn split_channels(&self, first: usize) -> (FeatureMap, FeatureMap) {
        let second = self.c - first;
        let mut a = Vec::with_capacity(self.tokens() * first);
        let mut b = Vec::with_capacity(self.tokens() * second);
        for t in 0..self.tokens() {
            let row = &self.data[t * self.c..(t + 1) * self.c];
            a.extend_from_slice(&row[..first]);
            b.extend_from_slice(&row[first..]);
        }
        (
            FeatureMap::from_vec(self.h, self.w, first, a),
            FeatureMap::from_vec(self.h, self.w, second, b),
        )
    }
}
