// Draggable field-direction arrow: a small canvas showing the unit
// direction in an isometric projection. Dragging steers azimuth and
// elevation; the owner receives the normalized vector on every change.

export class DirectionGizmo {
  private azimuth = 0.0;
  private elevation = Math.PI / 2;   // default +z
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement,
              private onChange: (dir: [number, number, number]) => void) {
    this.ctx = canvas.getContext("2d")!;
    let dragging = false;
    canvas.addEventListener("mousedown", () => { dragging = true; });
    window.addEventListener("mouseup", () => {
      if (dragging) {
        dragging = false;
        this.onChange(this.direction());
      }
    });
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      this.azimuth += e.movementX * 0.02;
      this.elevation = Math.min(Math.PI, Math.max(
        0, this.elevation + e.movementY * 0.02));
      this.draw();
    });
    this.draw();
  }

  direction(): [number, number, number] {
    const se = Math.sin(this.elevation);
    return [
      se * Math.cos(this.azimuth),
      se * Math.sin(this.azimuth),
      Math.cos(this.elevation),
    ];
  }

  setDirection(v: [number, number, number]): void {
    const n = Math.hypot(v[0], v[1], v[2]);
    if (n === 0) return;
    this.elevation = Math.acos(Math.max(-1, Math.min(1, v[2] / n)));
    this.azimuth = Math.atan2(v[1], v[0]);
    this.draw();
  }

  private project(v: [number, number, number]): [number, number] {
    // simple isometric projection, z up on screen
    const x = (v[0] - v[1]) * 0.7071;
    const y = v[2] - (v[0] + v[1]) * 0.35;
    const s = this.canvas.width * 0.32;
    return [this.canvas.width / 2 + x * s,
            this.canvas.height / 2 - y * s];
  }

  private draw(): void {
    const { ctx, canvas } = this;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#445";
    ctx.lineWidth = 1;
    for (const axis of [[1, 0, 0], [0, 1, 0], [0, 0, 1]] as const) {
      const [x, y] = this.project(axis as unknown as
                                  [number, number, number]);
      const [ox, oy] = this.project([0, 0, 0]);
      ctx.beginPath();
      ctx.moveTo(ox, oy);
      ctx.lineTo(x, y);
      ctx.stroke();
    }
    const dir = this.direction();
    const [ox, oy] = this.project([0, 0, 0]);
    const [x, y] = this.project(dir);
    ctx.strokeStyle = "#f5a623";
    ctx.fillStyle = "#f5a623";
    ctx.lineWidth = 2.5;
    ctx.beginPath();
    ctx.moveTo(ox, oy);
    ctx.lineTo(x, y);
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}
