fn main() {
    println!("slicemotion CLI placeholder");
}
