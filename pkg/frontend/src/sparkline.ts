// Polyline geometry for the per-update loss / distance sparklines.

export function sparklinePoints(
	series: number[],
	width: number,
	height: number,
	pad = 2,
): { x: number; y: number }[] {
	if (series.length === 0) return [];
	const lo = Math.min(...series);
	const hi = Math.max(...series);
	const span = hi - lo || 1;
	const innerW = width - 2 * pad;
	const innerH = height - 2 * pad;
	const dx = series.length > 1 ? innerW / (series.length - 1) : 0;
	return series.map((v, i) => ({
		x: pad + i * dx,
		y: pad + innerH * (1 - (v - lo) / span),
	}));
}

export function toSvgPath(pts: { x: number; y: number }[]): string {
	if (pts.length === 0) return "";
	return pts
		.map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`)
		.join(" ");
}
