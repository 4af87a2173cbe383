// problem: can-make-square
package main

import (
	"bufio"
	"fmt"
	"os"
)

func canMakeSquare(grid [][]byte) bool {
	for i := 0; i < 2; i++ {
		for j := 0; j < 2; j++ {
			var res int
			calcRes := func(r byte) {
				if r == 'W' {
					res++
				}
			}
			calcRes(grid[i][j])
			calcRes(grid[i][j+1])
			calcRes(grid[i+1][j])
			calcRes(grid[i+1][j+1])
			if res != 2 {
				return true
			}
		}
	}
	return false
}

func main() {
	in := bufio.NewReader(os.Stdin)
	grid := make([][]byte, 3)
	for r := 0; r < 3; r++ {
		var row string
		fmt.Fscan(in, &row)
		grid[r] = []byte(row)
	}
	if canMakeSquare(grid) {
		fmt.Println("true")
	} else {
		fmt.Println("false")
	}
}
