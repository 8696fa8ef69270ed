import http from "node:http";
import { AddressInfo } from "node:net";

export interface Scripted {
  url: string;
  calls: { method: string; path: string; at: number; auth?: string }[];
  close(): Promise<void>;
}

type Reply = { status: number; body?: unknown; delayMs?: number };

/** Tiny server that answers each request with the next scripted reply,
 *  repeating the last one once the script runs out. */
export function scriptedServer(replies: Reply[]): Promise<Scripted> {
  const calls: Scripted["calls"] = [];
  let cursor = 0;
  const server = http.createServer((req, res) => {
    calls.push({
      method: req.method ?? "",
      path: req.url ?? "",
      at: Date.now(),
      auth: req.headers.authorization,
    });
    const reply = replies[Math.min(cursor, replies.length - 1)];
    cursor++;
    const send = () => {
      res.statusCode = reply.status;
      res.setHeader("content-type", "application/json");
      res.end(JSON.stringify(reply.body ?? { detail: `scripted ${reply.status}` }));
    };
    if (reply.delayMs) setTimeout(send, reply.delayMs);
    else send();
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        url: `http://127.0.0.1:${port}`,
        calls,
        close: () =>
          new Promise<void>((done) => {
            server.closeAllConnections();
            server.close(() => done());
          }),
      });
    });
  });
}
