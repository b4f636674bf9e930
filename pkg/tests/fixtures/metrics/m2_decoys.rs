/* block comment: unsafe { *p } as *const u8 transmute(x) */
fn describe(n: usize) -> String {
    // let p: *mut u8 = 0 as *mut u8;
    let s = "unsafe { call(*ptr) } *const *mut";
    let c = '*';
    let raw = r#"as *mut T, "transmute(y)" *q"#;
    let bytes = b"*mut \" unsafe {";
    /* outer /* inner *p as *const i8 */ still comment *q */
    format!("{}{}{}{}{:?}", s, c, raw, n, bytes)
}

fn first<'a>(x: &'a [u8]) -> &'a u8 {
    &x[0]
}

/// Doc comment with `unsafe { *p }` in it.
fn deref_one(p: *const u8) -> u8 {
    unsafe { *p }
}
