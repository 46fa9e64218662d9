//! Binary rasters: 3x3 morphology and 8-connected component labelling.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryImage {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// True if some pixel of the clipped window reaching `rx` columns and
    /// `ry` rows from (x, y) equals `want`.
    fn window(&self, x: usize, y: usize, rx: usize, ry: usize, want: bool) -> bool {
        let (x0, x1) = (x.saturating_sub(rx), (x + rx).min(self.width - 1));
        let (y0, y1) = (y.saturating_sub(ry), (y + ry).min(self.height - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| self.get(xx, yy) == want))
    }

    /// Dilation by a (2rx+1) x (2ry+1) rectangle.
    pub fn dilate_by(&self, rx: usize, ry: usize) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.window(x, y, rx, ry, true))
    }

    /// Erosion by a (2rx+1) x (2ry+1) rectangle. Pixels outside the image
    /// count as set, so borders do not erode.
    pub fn erode_by(&self, rx: usize, ry: usize) -> Self {
        Self::from_fn(self.width, self.height, |x, y| !self.window(x, y, rx, ry, false))
    }

    pub fn dilate(&self) -> Self {
        self.dilate_by(1, 1)
    }

    pub fn erode(&self) -> Self {
        self.erode_by(1, 1)
    }

    pub fn close(&self) -> Self {
        self.dilate().erode()
    }

    pub fn open(&self) -> Self {
        self.erode().dilate()
    }

    /// Opening by a vertical 1x3 element: removes runs shorter than three
    /// rows while keeping near-vertical lines of any width.
    pub fn open_vertical(&self) -> Self {
        self.erode_by(0, 1).dilate_by(0, 1)
    }

    /// 8-connected components in raster order of their first pixel.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if !self.bits[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                comp.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            comp.sort_by_key(|&(x, y)| (y, x));
            out.push(comp);
        }
        out
    }
}
