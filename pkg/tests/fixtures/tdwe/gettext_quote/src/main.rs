#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]
use std::ffi::CStr;

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_uint = u32;
}

pub type quoting_style = libc::c_uint;

// Safe inner function (private)
fn gettext_quote_safe(msgid: &CStr, s: quoting_style) -> *const libc::c_char {
    if s == 1 && msgid.to_bytes() == b"`" {
        return b"\"\0" as *const u8 as *const libc::c_char;
    }
    if s == 1 && msgid.to_bytes() == b"'" {
        return b"\"\0" as *const u8 as *const libc::c_char;
    }
    msgid.as_ptr()
}

// Wrapper: accepts raw pointer, converts, delegates
unsafe extern "C" fn gettext_quote(
    mut msgid: *const libc::c_char, mut s: quoting_style,
) -> *const libc::c_char {
    let msgid = CStr::from_ptr(msgid);   // cvt extracted here
    gettext_quote_safe(msgid, s)
}

unsafe fn quote_pair(mut quoting_style: quoting_style) {
    let mut left_quote: *const libc::c_char = 0 as *const libc::c_char;
    let mut right_quote: *const libc::c_char = 0 as *const libc::c_char;
    left_quote  = gettext_quote(b"`\0" as *const u8 as *const libc::c_char, quoting_style);
    right_quote = gettext_quote(b"'\0" as *const u8 as *const libc::c_char, quoting_style);
    let l = CStr::from_ptr(left_quote).to_str().unwrap();
    let r = CStr::from_ptr(right_quote).to_str().unwrap();
    println!("{}word{}", l, r);
}

fn main() {
    let style: quoting_style = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    unsafe { quote_pair(style) }
}
