// problem: running-average
package main

import (
	"bufio"
	"fmt"
	"os"
)

func main() {
	in := bufio.NewReader(os.Stdin)
	out := bufio.NewWriter(os.Stdout)
	defer out.Flush()
	var n int
	fmt.Fscan(in, &n)
	var total int64
	for i := 1; i <= n; i++ {
		var x int64
		fmt.Fscan(in, &x)
		total += x
		fmt.Fprintf(out, "%.6f\n", float64(total)/float64(i))
	}
}
