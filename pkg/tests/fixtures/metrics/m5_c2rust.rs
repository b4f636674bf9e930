#[no_mangle]
pub unsafe extern "C" fn copy_words(mut dst: *mut libc::c_char, mut src: *const libc::c_char, mut n: libc::size_t) -> libc::c_int {
    let mut i: libc::size_t = 0;
    while i < n && *src.offset(i as isize) != 0 {
        *dst.offset(i as isize) = *src.offset(i as isize);
        i = i.wrapping_add(1);
    }
    i as libc::c_int
}

pub fn safe_entry(words: &mut [i8], text: &[i8]) -> i32 {
    let n = words.len().min(text.len());
    let copied = unsafe {
        copy_words(
            words.as_mut_ptr(),
            text.as_ptr(),
            n as libc::size_t,
        )
    };
    let first = unsafe { *words.as_ptr() };
    println!("{}", first);
    if copied > 0 { unsafe { libc::puts(text.as_ptr()) }; }
    copied
}
