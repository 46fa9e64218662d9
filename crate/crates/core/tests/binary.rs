use roomlayout::binary::*;

#[test]
fn opening_removes_specks_closing_fills_gaps() {
    let speck = BinaryImage::from_fn(9, 9, |x, y| x == 4 && y == 4);
    assert!(speck.open().bits.iter().all(|&b| !b));
    // 3-wide bar with a one-pixel gap
    let bar = BinaryImage::from_fn(9, 12, |x, y| (3..6).contains(&x) && y != 6);
    let closed = bar.close();
    assert!((0..12).all(|y| closed.get(4, y)));
    assert_eq!(bar.components().len(), 2);
    assert_eq!(closed.components().len(), 1);
}

#[test]
fn vertical_opening_keeps_thin_vertical_lines() {
    let line = BinaryImage::from_fn(9, 12, |x, y| x == 4 && y > 1);
    assert_eq!(line.open_vertical(), line);
    assert!(line.open().bits.iter().all(|&b| !b));
    let dash = BinaryImage::from_fn(9, 9, |x, y| y == 4 && (2..7).contains(&x));
    assert!(dash.open_vertical().bits.iter().all(|&b| !b));
}

#[test]
fn diagonal_neighbours_connect() {
    let diag = BinaryImage::from_fn(5, 5, |x, y| x == y);
    assert_eq!(diag.components().len(), 1);
    assert_eq!(diag.components()[0].len(), 5);
}
