// Canvas <-> grid coordinate mapping. The grid is the single source of
// truth: a click is snapped to the grid pixel it lands on, and drawing
// positions come back from those grid coordinates, so what the service
// receives is exactly what the overlay shows.

export interface ViewTransform {
	zoom: number; // canvas pixels per grid pixel, integer >= 1
	offsetX: number;
	offsetY: number;
}

export interface GridPoint {
	x: number;
	y: number;
}

export function canvasToGrid(
	cx: number,
	cy: number,
	vt: ViewTransform,
	gridWidth: number,
	gridHeight: number,
): GridPoint | null {
	const gx = Math.floor((cx - vt.offsetX) / vt.zoom);
	const gy = Math.floor((cy - vt.offsetY) / vt.zoom);
	if (gx < 0 || gy < 0 || gx >= gridWidth || gy >= gridHeight) return null;
	return { x: gx, y: gy };
}

// Canvas position of a grid pixel's center.
export function gridToCanvas(g: GridPoint, vt: ViewTransform): { x: number; y: number } {
	return {
		x: (g.x + 0.5) * vt.zoom + vt.offsetX,
		y: (g.y + 0.5) * vt.zoom + vt.offsetY,
	};
}
