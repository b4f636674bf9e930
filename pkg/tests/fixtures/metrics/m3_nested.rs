unsafe fn bump(p: *mut i32, n: i32) {
    *p += n;
    *p *= 2;
}

fn nested(p: *mut i32, q: *const i32) -> i32 {
    let mut acc = 0;
    unsafe {
        acc += *q;
        unsafe {
            bump(p, acc);
        }
        acc *= 2;
    }
    acc
}
