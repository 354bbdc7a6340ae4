/// A `channels × rows × cols` block of `f32`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![0.0; channels * rows * cols],
        }
    }

    pub fn from_data(channels: usize, rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * rows * cols, "tensor data length");
        Self {
            channels,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.channels, self.rows, self.cols) == (other.channels, other.rows, other.cols)
    }
}
