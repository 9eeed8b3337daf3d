/** Incremental parser for `event: <name>\ndata: <json>\n\n` streams. */

export interface SseEvent {
  event: string;
  data: any;
}

export class SseParser {
  private buffer = "";

  /** Feed a chunk, get back every complete event it finished. */
  push(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut < 0) break;
      const block = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      if (!block.trim()) continue;
      const lines = block.split("\n");
      let name = "message";
      const dataParts: string[] = [];
      for (const line of lines) {
        if (line.startsWith("event: ")) name = line.slice(7);
        else if (line.startsWith("data: ")) dataParts.push(line.slice(6));
      }
      events.push({ event: name, data: JSON.parse(dataParts.join("\n")) });
    }
    return events;
  }
}
