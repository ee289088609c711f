//! 2-D convolution and transposed convolution as single tape nodes.
//!
//! Layout is [B, C, H, W]. Both ops share an im2col gather and a col2im
//! scatter; the backward of each is expressed with the same two helpers.

use ndarray::{Array2, ArrayD, IxDyn};

use crate::tape::Tensor;

/// Gather sliding windows: rows indexed by (b, rh, rw), columns by (c, kh, kw).
/// Source pixel: (rh*stride + kh - pad, rw*stride + kw - pad); out of bounds -> 0.
fn gather_cols(
    src: &ArrayD<f64>,
    rows_h: usize,
    rows_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array2<f64> {
    let (b, c, hs, ws) = dims4(src);
    let mut cols = Array2::<f64>::zeros((b * rows_h * rows_w, c * k * k));
    let src_std = src.as_standard_layout();
    let s = src_std.as_slice().unwrap();
    for bi in 0..b {
        for rh in 0..rows_h {
            for rw in 0..rows_w {
                let row = (bi * rows_h + rh) * rows_w + rw;
                let mut col = 0usize;
                for ci in 0..c {
                    let base = (bi * c + ci) * hs * ws;
                    for kh in 0..k {
                        let ih = (rh * stride + kh) as isize - pad as isize;
                        for kw in 0..k {
                            let iw = (rw * stride + kw) as isize - pad as isize;
                            if ih >= 0 && (ih as usize) < hs && iw >= 0 && (iw as usize) < ws {
                                cols[[row, col]] = s[base + ih as usize * ws + iw as usize];
                            }
                            col += 1;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add inverse of [`gather_cols`] into a [b, c, target_h, target_w] image.
fn scatter_cols(
    cols: &Array2<f64>,
    b: usize,
    c: usize,
    rows_h: usize,
    rows_w: usize,
    target_h: usize,
    target_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[b, c, target_h, target_w]));
    let o = out.as_slice_mut().unwrap();
    for bi in 0..b {
        for rh in 0..rows_h {
            for rw in 0..rows_w {
                let row = (bi * rows_h + rh) * rows_w + rw;
                let mut col = 0usize;
                for ci in 0..c {
                    let base = (bi * c + ci) * target_h * target_w;
                    for kh in 0..k {
                        let ih = (rh * stride + kh) as isize - pad as isize;
                        for kw in 0..k {
                            let iw = (rw * stride + kw) as isize - pad as isize;
                            if ih >= 0
                                && (ih as usize) < target_h
                                && iw >= 0
                                && (iw as usize) < target_w
                            {
                                o[base + ih as usize * target_w + iw as usize] += cols[[row, col]];
                            }
                            col += 1;
                        }
                    }
                }
            }
        }
    }
    out
}

fn dims4(a: &ArrayD<f64>) -> (usize, usize, usize, usize) {
    let s = a.shape();
    assert_eq!(s.len(), 4, "expected 4-D [B,C,H,W], got {s:?}");
    (s[0], s[1], s[2], s[3])
}

/// [B,H,W,C]-ordered flat view of a [B,C,H,W] array as rows=(b,h,w), cols=C.
fn bhwc_rows(a: &ArrayD<f64>) -> Array2<f64> {
    let (b, c, h, w) = dims4(a);
    a.view()
        .permuted_axes(IxDyn(&[0, 2, 3, 1]))
        .as_standard_layout()
        .to_shape((b * h * w, c))
        .unwrap()
        .to_owned()
}

/// Rows=(b,h,w) × cols=C back to [B,C,H,W].
fn rows_to_bchw(rows: Array2<f64>, b: usize, c: usize, h: usize, w: usize) -> ArrayD<f64> {
    rows.into_shape_with_order((b, h, w, c))
        .unwrap()
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .to_owned()
        .into_dyn()
}

pub fn conv_out_size(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

pub fn conv_transpose_out_size(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h - 1) * stride + k - 2 * pad
}

/// x:[B,Cin,H,W], w:[Cout,Cin,k,k], bias:[Cout] -> [B,Cout,Ho,Wo]
pub fn conv2d(x: &Tensor, w: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
    let xv = x.value();
    let wv = w.value();
    let bv = bias.value();
    let (b, cin, h, wd) = dims4(&xv);
    let ws = wv.shape().to_vec();
    assert_eq!(ws[1], cin, "conv2d channel mismatch");
    let (cout, k) = (ws[0], ws[2]);
    assert_eq!(bv.len(), cout, "conv2d bias length");
    let ho = conv_out_size(h, k, stride, pad);
    let wo = conv_out_size(wd, k, stride, pad);

    let cols = gather_cols(&xv, ho, wo, k, stride, pad);
    let w_flat = wv.to_shape((cout, cin * k * k)).unwrap().to_owned();
    let mut y_flat = cols.dot(&w_flat.t()); // [B*Ho*Wo, Cout]
    let bs = bv.as_slice().unwrap();
    for mut row in y_flat.rows_mut() {
        for (v, bb) in row.iter_mut().zip(bs) {
            *v += *bb;
        }
    }
    let y = rows_to_bchw(y_flat, b, cout, ho, wo);

    let (xid, wid, bid) = (x.id(), w.id(), bias.id());
    x.tape().push_op(
        y,
        Box::new(move |vals, g, sink| {
            let g_flat = bhwc_rows(g); // [B*Ho*Wo, Cout]
            let w_flat = vals[wid].to_shape((cout, cin * k * k)).unwrap().to_owned();
            // dW = g^T . cols
            let cols = gather_cols(&vals[xid], ho, wo, k, stride, pad);
            let dw = g_flat.t().dot(&cols);
            sink(
                wid,
                dw.into_shape_with_order((cout, cin, k, k))
                    .unwrap()
                    .into_dyn(),
            );
            // db = sum over rows
            let db = g_flat.sum_axis(ndarray::Axis(0));
            sink(bid, db.into_dyn());
            // dx = col2im(g . w_flat)
            let dcols = g_flat.dot(&w_flat);
            sink(xid, scatter_cols(&dcols, b, cin, ho, wo, h, wd, k, stride, pad));
        }),
    )
}

/// x:[B,Cin,H,W], w:[Cin,Cout,k,k], bias:[Cout] -> [B,Cout,Ho,Wo], Ho=(H-1)*s+k-2p
pub fn conv2d_transpose(x: &Tensor, w: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
    let xv = x.value();
    let wv = w.value();
    let bv = bias.value();
    let (b, cin, h, wd) = dims4(&xv);
    let ws = wv.shape().to_vec();
    assert_eq!(ws[0], cin, "conv2d_transpose channel mismatch");
    let (cout, k) = (ws[1], ws[2]);
    assert_eq!(bv.len(), cout, "conv2d_transpose bias length");
    let ho = conv_transpose_out_size(h, k, stride, pad);
    let wo = conv_transpose_out_size(wd, k, stride, pad);

    let x_rows = bhwc_rows(&xv); // [B*H*W, Cin]
    let w_flat = wv.to_shape((cin, cout * k * k)).unwrap().to_owned();
    let cols = x_rows.dot(&w_flat); // [B*H*W, Cout*k*k]
    let mut y = scatter_cols(&cols, b, cout, h, wd, ho, wo, k, stride, pad);
    let bs = bv.as_slice().unwrap();
    for bi in 0..b {
        for co in 0..cout {
            y.index_axis_mut(ndarray::Axis(0), bi)
                .index_axis_mut(ndarray::Axis(0), co)
                .mapv_inplace(|v| v + bs[co]);
        }
    }

    let (xid, wid, bid) = (x.id(), w.id(), bias.id());
    x.tape().push_op(
        y,
        Box::new(move |vals, g, sink| {
            // dcols[row=(b,ih,iw), (cout,kh,kw)] gathers from g
            let dcols = gather_cols(g, h, wd, k, stride, pad); // [B*H*W, Cout*k*k]
            let w_flat = vals[wid].to_shape((cin, cout * k * k)).unwrap().to_owned();
            let dx_rows = dcols.dot(&w_flat.t()); // [B*H*W, Cin]
            sink(xid, rows_to_bchw(dx_rows, b, cin, h, wd));
            let x_rows = bhwc_rows(&vals[xid]);
            let dw = x_rows.t().dot(&dcols); // [Cin, Cout*k*k]
            sink(
                wid,
                dw.into_shape_with_order((cin, cout, k, k))
                    .unwrap()
                    .into_dyn(),
            );
            let db = bhwc_rows(g).sum_axis(ndarray::Axis(0));
            sink(bid, db.into_dyn());
        }),
    )
}
