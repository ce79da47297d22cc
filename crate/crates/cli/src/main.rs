fn main() { println!("critlab"); }
