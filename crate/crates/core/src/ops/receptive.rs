/// Kernel size and stride of one layer, enough to track receptive fields.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LayerGeometry {
    pub kernel: usize,
    pub stride: usize,
}

impl LayerGeometry {
    pub const fn conv(kernel: usize) -> Self {
        LayerGeometry { kernel, stride: 1 }
    }

    pub const fn pool2x2() -> Self {
        LayerGeometry { kernel: 2, stride: 2 }
    }
}

/// Side length of the input region that influences one output cell of the
/// stack `layers`, applied first to last.
pub fn receptive_field(layers: &[LayerGeometry]) -> usize {
    let mut rf = 1;
    let mut jump = 1;
    for l in layers {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    rf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_3x3_match_single_large_kernel() {
        let c = LayerGeometry::conv(3);
        assert_eq!(receptive_field(&[c, c]), 5);
        assert_eq!(receptive_field(&[c, c, c]), 7);
        for n in 1..10 {
            assert_eq!(receptive_field(&vec![c; n]), 2 * n + 1);
        }
    }

    #[test]
    fn pooling_doubles_subsequent_growth() {
        let c = LayerGeometry::conv(3);
        let p = LayerGeometry::pool2x2();
        assert_eq!(receptive_field(&[c, c, p, c]), 10);
    }
}
