fn main() {
    println!("byzfuse");
}
